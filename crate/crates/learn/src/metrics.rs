//! Classification metrics shared by both learned units.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Occurrences in the gold labels.
    pub support: usize,
    pub predicted: usize,
}

/// Per-class scores over every label that occurs in gold or predictions.
///
/// A label predicted but never gold gets F1 = 0; labels in neither list do not
/// appear.
pub fn class_scores<L: AsRef<str>>(gold: &[L], pred: &[L]) -> Vec<ClassScore> {
    assert_eq!(gold.len(), pred.len(), "gold and predicted label lists differ in length");
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        counts.entry(g).or_default().1 += 1;
        counts.entry(p).or_default().2 += 1;
        if g == p {
            counts.entry(g).or_default().0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(label, (tp, support, predicted))| {
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let (precision, recall) = (ratio(tp, predicted), ratio(tp, support));
            let f1 = if tp == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassScore { label: label.to_string(), precision, recall, f1, support, predicted }
        })
        .collect()
}

/// Unweighted mean of per-class F1. Empty input scores 0.
pub fn macro_f1<L: AsRef<str>>(gold: &[L], pred: &[L]) -> f64 {
    let scores = class_scores(gold, pred);
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64
}

/// Share of equal positions.
pub fn accuracy<L: PartialEq>(gold: &[L], pred: &[L]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64 / gold.len() as f64
}

/// Mean over dialogues of the per-dialogue share of correctly predicted turns.
/// Dialogues without turns are skipped.
pub fn dialogue_accuracy<L: PartialEq>(dialogues: &[(Vec<L>, Vec<L>)]) -> f64 {
    let scores: Vec<f64> = dialogues.iter().filter(|(g, _)| !g.is_empty()).map(|(g, p)| accuracy(g, p)).collect();
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionCell {
    pub gold: String,
    pub predicted: String,
    pub count: usize,
}

/// Off-diagonal (gold, predicted) pairs, most frequent first.
pub fn confusions<L: AsRef<str>>(gold: &[L], pred: &[L]) -> Vec<ConfusionCell> {
    let mut m: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        if g.as_ref() != p.as_ref() {
            *m.entry((g.as_ref(), p.as_ref())).or_default() += 1;
        }
    }
    let mut cells: Vec<ConfusionCell> =
        m.into_iter().map(|((g, p), count)| ConfusionCell { gold: g.into(), predicted: p.into(), count }).collect();
    cells.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| (&a.gold, &a.predicted).cmp(&(&b.gold, &b.predicted))));
    cells
}

/// Labels that occur in either list.
pub fn label_set<L: AsRef<str>>(gold: &[L], pred: &[L]) -> BTreeSet<String> {
    gold.iter().chain(pred).map(|l| l.as_ref().to_string()).collect()
}
