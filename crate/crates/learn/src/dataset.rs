//! Labeled examples built from dialogue records or from their export files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tutorbot_core::record::{Artifact, EntityAnnotation, TAGS};
use tutorbot_core::{Action, DialogueRecord};

/// Smallest corpus a dataset is built from.
pub const MIN_DIALOGUES: usize = 30;

/// Tag for tokens outside every entity span.
pub const OTHER: &str = "other";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{found} dialogues given, at least {MIN_DIALOGUES} are needed for a train/eval/test split")]
    TooFew { found: usize },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("split ratios must not all be zero")]
    Ratios,
}

/// Relative sizes of the three splits; 4:1:1 turns 300 dialogues into 200/50/50.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub eval: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 4, eval: 1, test: 1 }
    }
}

impl SplitRatios {
    /// Dialogue counts for `n` dialogues: eval and test are rounded, train takes the rest.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize), DatasetError> {
        let total = (self.train + self.eval + self.test) as f64;
        if total == 0.0 {
            return Err(DatasetError::Ratios);
        }
        let part = |r: u32| ((n as f64) * r as f64 / total).round() as usize;
        let (eval, test) = (part(self.eval), part(self.test));
        let eval = eval.min(n);
        let test = test.min(n - eval);
        Ok((n - eval - test, eval, test))
    }
}

/// Dataset build switches. The defaults keep capitalization and drop punctuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub seed: u64,
    pub ratios: SplitRatios,
    /// Lowercase every token (casing ablation).
    pub lowercase: bool,
    /// Keep punctuation characters as tokens (punctuation ablation).
    pub keep_punctuation: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { seed: 7, ratios: SplitRatios::default(), lowercase: false, keep_punctuation: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Character offsets into the raw utterance.
    pub start: usize,
    pub end: usize,
}

/// Splits text into word tokens (letters and digits) and single punctuation marks.
pub fn tokenize(text: &str, opts: &BuildOptions) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word: Option<(usize, String)> = None;
    let flush = |word: &mut Option<(usize, String)>, out: &mut Vec<Token>, end: usize| {
        if let Some((start, w)) = word.take() {
            out.push(Token { text: w, start, end });
        }
    };
    let mut len = 0;
    for (i, c) in text.chars().enumerate() {
        len = i + 1;
        if c.is_alphanumeric() {
            word.get_or_insert_with(|| (i, String::new())).1.push(c);
            continue;
        }
        flush(&mut word, &mut out, i);
        if !c.is_whitespace() && opts.keep_punctuation {
            out.push(Token { text: c.to_string(), start: i, end: i + 1 });
        }
    }
    flush(&mut word, &mut out, len);
    if opts.lowercase {
        for t in &mut out {
            t.text = t.text.to_lowercase();
        }
    }
    out
}

/// Tag of each token: the label of the entity span it overlaps, else `other`.
/// A word that is both the intent keyword and a slot value ("Exercise") takes the
/// slot label.
pub fn token_tags(tokens: &[Token], entities: &[EntityAnnotation]) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            let mut hits = entities.iter().filter(|e| t.start < e.end && e.start < t.end);
            let first = hits.clone().find(|e| e.label != "intent");
            first
                .or_else(|| hits.next())
                .map(|e| e.label.clone())
                .unwrap_or_else(|| OTHER.into())
        })
        .collect()
}

/// One user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub text: String,
    pub tokens: Vec<String>,
    /// System action shown before this turn; `None` for the opening message.
    pub prev_action: Option<Action>,
    pub label: Action,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub examples: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub options: BuildOptions,
    pub train: Vec<Dialogue>,
    pub eval: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
}

impl LabeledDataset {
    pub fn train_examples(&self) -> impl Iterator<Item = &Example> {
        self.train.iter().flat_map(|d| &d.examples)
    }

    pub fn sizes(&self) -> [(usize, usize); 3] {
        let count = |v: &[Dialogue]| (v.len(), v.iter().map(|d| d.examples.len()).sum());
        [count(&self.train), count(&self.eval), count(&self.test)]
    }

    pub fn all(&self) -> impl Iterator<Item = &Dialogue> {
        self.train.iter().chain(&self.eval).chain(&self.test)
    }
}

/// What a dataset needs from one logged user turn.
#[derive(Debug, Clone, PartialEq)]
struct TurnSource {
    turn_index: usize,
    text: String,
    next_action: Action,
    entities: Vec<EntityAnnotation>,
}

fn assemble(mut dialogues: BTreeMap<String, Vec<TurnSource>>, opts: &BuildOptions) -> Result<LabeledDataset, DatasetError> {
    if dialogues.len() < MIN_DIALOGUES {
        return Err(DatasetError::TooFew { found: dialogues.len() });
    }
    let (n_train, n_eval, _) = opts.ratios.counts(dialogues.len())?;
    let mut ids: Vec<String> = dialogues.keys().cloned().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));

    let mut build = |ids: &[String]| -> Vec<Dialogue> {
        let mut ids = ids.to_vec();
        ids.sort();
        ids.into_iter()
            .map(|id| {
                let mut turns = dialogues.remove(&id).expect("id comes from the map");
                turns.sort_by_key(|t| t.turn_index);
                let mut prev = None;
                let examples = turns
                    .into_iter()
                    .map(|t| {
                        let tokens = tokenize(&t.text, opts);
                        let ex = Example {
                            dialogue_id: id.clone(),
                            turn_index: t.turn_index,
                            tags: token_tags(&tokens, &t.entities),
                            tokens: tokens.into_iter().map(|t| t.text).collect(),
                            text: t.text,
                            prev_action: prev,
                            label: t.next_action,
                        };
                        prev = Some(t.next_action);
                        ex
                    })
                    .collect();
                Dialogue { id, examples }
            })
            .collect()
    };
    let train = build(&ids[..n_train]);
    let eval = build(&ids[n_train..n_train + n_eval]);
    let test = build(&ids[n_train + n_eval..]);
    Ok(LabeledDataset { options: *opts, train, eval, test })
}

/// Builds the dataset from stored dialogue records.
pub fn build_dataset(records: &[DialogueRecord], opts: &BuildOptions) -> Result<LabeledDataset, DatasetError> {
    let dialogues = records
        .iter()
        .map(|r| {
            let turns = r
                .turns
                .iter()
                .map(|t| TurnSource {
                    turn_index: t.turn_index,
                    text: t.user_text.clone(),
                    next_action: t.next_action,
                    entities: t.entities.clone(),
                })
                .collect();
            (r.dialogue_id.clone(), turns)
        })
        .collect();
    assemble(dialogues, opts)
}

#[derive(Deserialize)]
struct TripleLine {
    dialogue_id: String,
    turn_index: usize,
    user_request: String,
    next_action: String,
}

#[derive(Deserialize)]
struct EntityLine {
    dialogue_id: String,
    turn_index: usize,
    text: String,
    entities: Vec<EntityAnnotation>,
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path, schema: Artifact) -> Result<Vec<T>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.into(), source })?;
    let fmt = |line: usize, message: String| DatasetError::Format { path: path.into(), line, message };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            let header: serde_json::Value = serde_json::from_str(line).map_err(|e| fmt(1, e.to_string()))?;
            if header["schema"] != format!("tutorbot.{}", schema.name()) {
                return Err(fmt(1, format!("expected the {} header, found {header}", schema.name())));
            }
            continue;
        }
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(line).map_err(|e| fmt(i + 1, e.to_string()))?);
        }
    }
    Ok(out)
}

/// Builds the dataset from `triples.jsonl` and `entities.jsonl` in an export directory.
pub fn build_from_export(dir: &Path, opts: &BuildOptions) -> Result<LabeledDataset, DatasetError> {
    let tpath = dir.join(Artifact::Triples.file_name());
    let epath = dir.join(Artifact::Entities.file_name());
    let triples: Vec<TripleLine> = read_lines(&tpath, Artifact::Triples)?;
    let entities: Vec<EntityLine> = read_lines(&epath, Artifact::Entities)?;
    let mut spans: BTreeMap<(String, usize), EntityLine> =
        entities.into_iter().map(|e| ((e.dialogue_id.clone(), e.turn_index), e)).collect();

    let mut dialogues: BTreeMap<String, Vec<TurnSource>> = BTreeMap::new();
    for (i, t) in triples.into_iter().enumerate() {
        let line = i + 2;
        let next_action = Action::parse(&t.next_action)
            .ok_or_else(|| DatasetError::Format { path: tpath.clone(), line, message: format!("unknown action {}", t.next_action) })?;
        let e = spans.remove(&(t.dialogue_id.clone(), t.turn_index)).ok_or_else(|| DatasetError::Format {
            path: epath.clone(),
            line,
            message: format!("no entity line for {} turn {}", t.dialogue_id, t.turn_index),
        })?;
        if e.text != t.user_request {
            return Err(DatasetError::Format { path: epath.clone(), line, message: "text differs from the triple".into() });
        }
        dialogues.entry(t.dialogue_id).or_default().push(TurnSource {
            turn_index: t.turn_index,
            text: t.user_request,
            next_action,
            entities: e.entities,
        });
    }
    assemble(dialogues, opts)
}

/// The seven tags in a fixed order.
pub fn tags() -> [&'static str; 7] {
    TAGS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_keep_offsets() {
        let opts = BuildOptions { keep_punctuation: true, ..Default::default() };
        let toks = tokenize("Exercise 5 (a), Übung", &opts);
        let texts: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["Exercise", "5", "(", "a", ")", ",", "Übung"]);
        assert_eq!((toks[6].start, toks[6].end), (16, 21));
        let plain: Vec<String> = tokenize("Exercise 5 (a)", &BuildOptions { lowercase: true, ..Default::default() })
            .into_iter()
            .map(|t| t.text)
            .collect();
        assert_eq!(plain, ["exercise", "5", "a"]);
    }

    #[test]
    fn split_counts() {
        let r = SplitRatios::default();
        assert_eq!(r.counts(300).unwrap(), (200, 50, 50));
        assert_eq!(r.counts(30).unwrap(), (20, 5, 5));
        assert_eq!(r.counts(31).unwrap(), (21, 5, 5));
        assert!(SplitRatios { train: 0, eval: 0, test: 0 }.counts(30).is_err());
    }
}
