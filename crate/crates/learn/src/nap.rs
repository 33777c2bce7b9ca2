//! Next-action prediction: a linear classifier over the 13 system actions.
//!
//! Features are a bias, the utterance's unigrams and bigrams, and in the extended
//! setting one categorical feature for the previous system action. Tokens seen
//! fewer than `min_count` times in training share an out-of-vocabulary bucket.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tutorbot_core::Action;

use crate::dataset::{tokenize, BuildOptions, Example, LabeledDataset};
use crate::perceptron::{add_row, argmax, Averaged};

pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NapSetting {
    /// The user utterance only.
    Default,
    /// The utterance plus the previous system action.
    Extended,
}

impl NapSetting {
    pub fn as_str(self) -> &'static str {
        match self {
            NapSetting::Default => "default",
            NapSetting::Extended => "extended",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Minimum training frequency for a token to keep its own feature.
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 12, seed: 7, min_count: 2 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("the training split has no examples")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NapModel {
    pub setting: NapSetting,
    /// Tokenization used when predicting from raw text.
    pub options: BuildOptions,
    pub vocab: BTreeSet<String>,
    pub weights: BTreeMap<String, Vec<f64>>,
    /// Returned for utterances without tokens.
    pub majority: Action,
}

fn prev_name(prev: Option<Action>) -> &'static str {
    prev.map_or("none", Action::as_str)
}

/// Feature strings of one utterance.
pub fn features(tokens: &[String], prev: Option<Action>, setting: NapSetting, vocab: &BTreeSet<String>) -> Vec<String> {
    let words: Vec<&str> = tokens.iter().map(|t| if vocab.contains(t) { t.as_str() } else { UNK }).collect();
    let mut out = vec!["bias".to_string()];
    out.extend(words.iter().map(|w| format!("w={w}")));
    out.extend(words.windows(2).map(|p| format!("bg={}|{}", p[0], p[1])));
    if setting == NapSetting::Extended {
        out.push(format!("prev={}", prev_name(prev)));
    }
    out
}

fn class_of(a: Action) -> usize {
    Action::ALL.iter().position(|x| *x == a).expect("every action is listed")
}

/// Trains on the dataset's train split.
pub fn train_nap(ds: &LabeledDataset, setting: NapSetting, cfg: &TrainConfig) -> Result<NapModel, TrainError> {
    let examples: Vec<&Example> = ds.train_examples().collect();
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    let mut label_freq = [0usize; 13];
    for e in &examples {
        for t in &e.tokens {
            *freq.entry(t).or_default() += 1;
        }
        label_freq[class_of(e.label)] += 1;
    }
    let vocab: BTreeSet<String> =
        freq.into_iter().filter(|(_, n)| *n >= cfg.min_count).map(|(t, _)| t.to_string()).collect();
    let majority = Action::ALL[(0..13).max_by_key(|i| (label_freq[*i], std::cmp::Reverse(*i))).unwrap()];

    let feats: Vec<(Vec<String>, usize)> =
        examples.iter().map(|e| (features(&e.tokens, e.prev_action, setting, &vocab), class_of(e.label))).collect();
    let mut order: Vec<usize> = (0..feats.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = Averaged::new(13);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (f, gold) = &feats[i];
            let guess = argmax(&w.scores(f));
            if guess != *gold {
                for x in f {
                    w.update(x, *gold, 1.0);
                    w.update(x, guess, -1.0);
                }
            }
            w.tick();
        }
    }
    Ok(NapModel { setting, options: ds.options, vocab, weights: w.finish(), majority })
}

impl NapModel {
    /// Predicts from tokens; the previous action is ignored in the default setting.
    pub fn predict(&self, tokens: &[String], prev: Option<Action>) -> Action {
        if tokens.is_empty() {
            return self.majority;
        }
        let mut s = vec![0.0; 13];
        for f in features(tokens, prev, self.setting, &self.vocab) {
            add_row(&mut s, &self.weights, &f);
        }
        Action::ALL[argmax(&s)]
    }

    pub fn predict_text(&self, text: &str, prev: Option<Action>) -> Action {
        let tokens: Vec<String> = tokenize(text, &self.options).into_iter().map(|t| t.text).collect();
        self.predict(&tokens, prev)
    }
}
