//! Averaged perceptron weights keyed by feature string.

use std::collections::{BTreeMap, HashMap};

/// Weights under training. Averaging uses the usual trick of keeping a second
/// accumulator scaled by the update counter, so the average costs nothing per step.
pub(crate) struct Averaged {
    classes: usize,
    w: HashMap<String, Vec<f64>>,
    u: HashMap<String, Vec<f64>>,
    c: f64,
}

impl Averaged {
    pub fn new(classes: usize) -> Self {
        Averaged { classes, w: HashMap::new(), u: HashMap::new(), c: 1.0 }
    }

    pub fn scores<'a>(&self, feats: impl IntoIterator<Item = &'a String>) -> Vec<f64> {
        let mut s = vec![0.0; self.classes];
        for f in feats {
            if let Some(w) = self.w.get(f) {
                s.iter_mut().zip(w).for_each(|(a, b)| *a += b);
            }
        }
        s
    }

    pub fn weight(&self, feat: &str, class: usize) -> f64 {
        self.w.get(feat).map_or(0.0, |w| w[class])
    }

    pub fn update(&mut self, feat: &str, class: usize, delta: f64) {
        let n = self.classes;
        self.w.entry(feat.to_string()).or_insert_with(|| vec![0.0; n])[class] += delta;
        self.u.entry(feat.to_string()).or_insert_with(|| vec![0.0; n])[class] += self.c * delta;
    }

    /// Call once per training instance.
    pub fn tick(&mut self) {
        self.c += 1.0;
    }

    /// Averaged weights; all-zero rows are dropped.
    pub fn finish(self) -> BTreeMap<String, Vec<f64>> {
        let c = self.c;
        let u = self.u;
        self.w
            .into_iter()
            .filter_map(|(f, w)| {
                let uf = &u[&f];
                let avg: Vec<f64> = w.iter().zip(uf).map(|(w, u)| w - u / c).collect();
                avg.iter().any(|x| *x != 0.0).then_some((f, avg))
            })
            .collect()
    }
}

/// Index of the largest score; ties go to the lower index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn add_row(acc: &mut [f64], weights: &BTreeMap<String, Vec<f64>>, feat: &str) {
    if let Some(w) = weights.get(feat) {
        acc.iter_mut().zip(w).for_each(|(a, b)| *a += b);
    }
}
