//! Entity tagging: one tag per token from a fixed set of seven, decoded with
//! Viterbi over emission and first-order transition weights.
//!
//! Emission features look at the word, its shape, affixes, neighbours and a
//! gazetteer of catalog vocabulary. Transition weights live in the same table
//! under `t=<previous tag>` keys.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tutorbot_core::catalog::EntryKind;
use tutorbot_core::record::TAGS;
use tutorbot_core::CatalogIndex;

use crate::dataset::{tokenize, BuildOptions, LabeledDataset};
use crate::nap::{TrainConfig, TrainError};
use crate::perceptron::{add_row, argmax, Averaged};

const START: &str = "<s>";

/// Lowercase catalog words mapped to the entry kinds they occur in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gazetteer(pub BTreeMap<String, BTreeSet<String>>);

impl Gazetteer {
    pub fn from_index(index: &CatalogIndex) -> Self {
        let mut g: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for e in index.entries() {
            let kind = match e.kind {
                EntryKind::Topic => "topic",
                EntryKind::Subtopic => "subtopic",
                EntryKind::ExamMode => "exam_mode",
                EntryKind::Level => "exam_level",
            };
            for phrase in std::iter::once(&e.title).chain(&e.synonyms) {
                for w in phrase.split(|c: char| !c.is_alphanumeric()).filter(|w| w.chars().count() > 1) {
                    g.entry(w.to_lowercase()).or_default().insert(kind.to_string());
                }
            }
        }
        Gazetteer(g)
    }

    pub fn kinds(&self, word: &str) -> impl Iterator<Item = &String> {
        self.0.get(&word.to_lowercase()).into_iter().flatten()
    }
}

fn shape(word: &str) -> String {
    let mut out = String::new();
    for c in word.chars() {
        let k = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_ascii_digit() {
            'd'
        } else {
            c
        };
        if !out.ends_with(k) {
            out.push(k);
        }
    }
    out
}

fn affix(word: &str, n: usize, suffix: bool) -> String {
    let chars: Vec<char> = word.chars().collect();
    let n = n.min(chars.len());
    let part: String = if suffix { chars[chars.len() - n..].iter().collect() } else { chars[..n].iter().collect() };
    part.to_lowercase()
}

/// Emission features of every token.
pub fn token_features(tokens: &[String], gaz: &Gazetteer) -> Vec<Vec<String>> {
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    (0..tokens.len())
        .map(|i| {
            let w = &tokens[i];
            let mut f = vec![
                "bias".to_string(),
                format!("w={}", lower[i]),
                format!("shape={}", shape(w)),
                format!("pre3={}", affix(w, 3, false)),
                format!("suf3={}", affix(w, 3, true)),
                format!("prev={}", if i == 0 { "<bos>" } else { &lower[i - 1] }),
                format!("next={}", lower.get(i + 1).map_or("<eos>", |s| s.as_str())),
            ];
            if w.chars().count() == 1 {
                f.push("single".into());
            }
            if i > 0 {
                f.push(format!("prevshape={}", shape(&tokens[i - 1])));
            }
            for k in gaz.kinds(w) {
                f.push(format!("gaz={k}"));
            }
            if i > 0 {
                for k in gaz.kinds(&tokens[i - 1]) {
                    f.push(format!("prevgaz={k}"));
                }
            }
            if let Some(n) = tokens.get(i + 1) {
                for k in gaz.kinds(n) {
                    f.push(format!("nextgaz={k}"));
                }
            }
            f
        })
        .collect()
}

fn tag_index(tag: &str) -> usize {
    TAGS.iter().position(|t| *t == tag).unwrap_or(TAGS.len() - 1)
}

fn transition_key(prev: Option<usize>) -> String {
    format!("t={}", prev.map_or(START, |p| TAGS[p]))
}

/// Best tag sequence given per-token emission scores and a transition lookup.
fn viterbi(emissions: &[Vec<f64>], trans: impl Fn(Option<usize>, usize) -> f64) -> Vec<usize> {
    let n = TAGS.len();
    if emissions.is_empty() {
        return Vec::new();
    }
    let mut score: Vec<f64> = (0..n).map(|t| emissions[0][t] + trans(None, t)).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(emissions.len());
    for e in &emissions[1..] {
        let mut next = vec![f64::NEG_INFINITY; n];
        let mut ptr = vec![0; n];
        for cur in 0..n {
            for (prev, sp) in score.iter().enumerate() {
                let s = sp + trans(Some(prev), cur) + e[cur];
                if s > next[cur] {
                    next[cur] = s;
                    ptr[cur] = prev;
                }
            }
        }
        back.push(ptr);
        score = next;
    }
    let mut best = argmax(&score);
    let mut path = vec![best];
    for ptr in back.iter().rev() {
        best = ptr[best];
        path.push(best);
    }
    path.reverse();
    path
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerModel {
    pub options: BuildOptions,
    pub gazetteer: Gazetteer,
    pub weights: BTreeMap<String, Vec<f64>>,
}

/// Trains a structured perceptron on the train split.
pub fn train_ner(ds: &LabeledDataset, gazetteer: Gazetteer, cfg: &TrainConfig) -> Result<NerModel, TrainError> {
    let data: Vec<(Vec<Vec<String>>, Vec<usize>)> = ds
        .train_examples()
        .filter(|e| !e.tokens.is_empty())
        .map(|e| (token_features(&e.tokens, &gazetteer), e.tags.iter().map(|t| tag_index(t)).collect()))
        .collect();
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = Averaged::new(TAGS.len());
    let keys: Vec<String> = std::iter::once(None).chain((0..TAGS.len()).map(Some)).map(transition_key).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (feats, gold) = &data[i];
            let em: Vec<Vec<f64>> = feats.iter().map(|f| w.scores(f)).collect();
            let guess = viterbi(&em, |p, c| w.weight(&keys[p.map_or(0, |p| p + 1)], c));
            if guess != *gold {
                for (pos, f) in feats.iter().enumerate() {
                    let (g, p) = (gold[pos], guess[pos]);
                    let (gp, pp) = if pos == 0 { (None, None) } else { (Some(gold[pos - 1]), Some(guess[pos - 1])) };
                    if g != p {
                        for x in f {
                            w.update(x, g, 1.0);
                            w.update(x, p, -1.0);
                        }
                    }
                    if g != p || gp != pp {
                        w.update(&transition_key(gp), g, 1.0);
                        w.update(&transition_key(pp), p, -1.0);
                    }
                }
            }
            w.tick();
        }
    }
    Ok(NerModel { options: ds.options, gazetteer, weights: w.finish() })
}

impl NerModel {
    pub fn predict(&self, tokens: &[String]) -> Vec<String> {
        let feats = token_features(tokens, &self.gazetteer);
        let em: Vec<Vec<f64>> = feats
            .iter()
            .map(|f| {
                let mut s = vec![0.0; TAGS.len()];
                for x in f {
                    add_row(&mut s, &self.weights, x);
                }
                s
            })
            .collect();
        let trans: Vec<Vec<f64>> = std::iter::once(None)
            .chain((0..TAGS.len()).map(Some))
            .map(|p| {
                let mut s = vec![0.0; TAGS.len()];
                add_row(&mut s, &self.weights, &transition_key(p));
                s
            })
            .collect();
        viterbi(&em, |p, c| trans[p.map_or(0, |p| p + 1)][c]).into_iter().map(|t| TAGS[t].to_string()).collect()
    }

    /// Tags raw text, returning each token with its tag.
    pub fn tag_text(&self, text: &str) -> Vec<(String, String)> {
        let tokens: Vec<String> = tokenize(text, &self.options).into_iter().map(|t| t.text).collect();
        let tags = self.predict(&tokens);
        tokens.into_iter().zip(tags).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_collapse_runs() {
        assert_eq!(shape("Exercise"), "Xx");
        assert_eq!(shape("12a"), "dx");
        assert_eq!(shape("III"), "X");
    }

    #[test]
    fn viterbi_follows_transitions() {
        // emissions prefer tag 0 then 1, but 0 -> 1 is forbidden
        let em = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.9]];
        let path = viterbi(&em, |p, c| if p == Some(0) && c == 1 { -5.0 } else { 0.0 });
        assert_eq!(path, vec![0, 6]);
    }
}
