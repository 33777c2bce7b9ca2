//! Text preprocessing: tokenization with character spans, lowercasing, stopword and
//! punctuation removal, number-word and roman numeral conversion, removal of formula
//! variables, synonym folding and suffix stemming.
//!
//! All offsets are *character* offsets into the original string.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

const DEFAULT_CONFIG: &str = include_str!("../data/normalizer.toml");

/// Identifier of a preprocessing step that changed the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    Lowercase,
    Punctuation,
    Stopword,
    MathVariable,
    Ordinal,
    RomanNumeral,
    Synonym,
    Stem,
}

/// One retained token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normal: String,
    pub start: usize,
    pub end: usize,
    /// Set when `normal` depends on neighbouring tokens (ordinal or roman numeral
    /// conversion) rather than on the surface form alone.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub contextual: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedText {
    pub original: String,
    pub tokens: Vec<Token>,
    pub applied_rules: Vec<RuleId>,
}

impl NormalizedText {
    pub fn empty() -> Self {
        Self { original: String::new(), tokens: Vec::new(), applied_rules: Vec::new() }
    }

    /// The normal forms joined by single spaces.
    pub fn render(&self) -> String {
        self.normals().collect::<Vec<_>>().join(" ")
    }

    pub fn normals(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.normal.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Slice of `original` between two character offsets.
    pub fn slice(&self, start: usize, end: usize) -> String {
        char_slice(&self.original, start, end)
    }
}

/// Characters `start..end` of `s`.
pub fn char_slice(s: &str, start: usize, end: usize) -> String {
    s.chars().skip(start).take(end.saturating_sub(start)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemRule {
    pub suffix: String,
    pub replacement: String,
    /// Minimum number of characters left in front of the suffix.
    pub min_stem: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizerConfig {
    pub stopwords: BTreeSet<String>,
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
    #[serde(default)]
    pub ordinal_words: BTreeMap<String, String>,
    #[serde(default)]
    pub ordinal_anchors: BTreeSet<String>,
    pub roman_numeral_limit: u32,
    #[serde(default = "default_math_symbols")]
    pub math_variable_symbols: BTreeSet<String>,
    #[serde(default)]
    pub stemmer_rules: Vec<StemRule>,
    /// Words that are never dropped as stopwords (single-word catalog titles).
    #[serde(default)]
    pub protected: BTreeSet<String>,
}

fn default_math_symbols() -> BTreeSet<String> {
    BTreeSet::from(["x".to_string()])
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("bundled normalizer config is valid")
    }
}

impl NormalizerConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: NormalizerConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { what: "normalizer", message: e.to_string() })?;
        cfg.lowercase_keys();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn lowercase_keys(&mut self) {
        let lower = |set: &BTreeSet<String>| set.iter().map(|s| s.to_lowercase()).collect();
        self.stopwords = lower(&self.stopwords);
        self.ordinal_anchors = lower(&self.ordinal_anchors);
        self.math_variable_symbols = lower(&self.math_variable_symbols);
        self.protected = lower(&self.protected);
        self.synonyms = self.synonyms.iter().map(|(k, v)| (k.to_lowercase(), v.to_lowercase())).collect();
        self.ordinal_words = self.ordinal_words.iter().map(|(k, v)| (k.to_lowercase(), v.clone())).collect();
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.roman_numeral_limit < 10 {
            return Err(ConfigError::Invalid(format!(
                "roman_numeral_limit must be at least 10, got {}",
                self.roman_numeral_limit
            )));
        }
        for (from, to) in &self.synonyms {
            if let Some(next) = self.synonyms.get(to) {
                if next != to {
                    return Err(ConfigError::Invalid(format!(
                        "synonym chain: {from} -> {to} -> {next}; values must be fixed points"
                    )));
                }
            }
        }
        for (word, digit) in &self.ordinal_words {
            if digit.is_empty() || !digit.chars().all(|c| c.is_ascii_digit()) {
                return Err(ConfigError::Invalid(format!("ordinal word {word} maps to non-digit {digit:?}")));
            }
        }
        Ok(())
    }

    /// Adds words that stopword removal must keep.
    pub fn protect<I, S>(&mut self, words: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.protected.extend(words.into_iter().map(|w| w.as_ref().to_lowercase()));
    }

    fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word) && !self.protected.contains(word)
    }

    /// Context-free normal form of a single lowercase word: synonym folding and
    /// stemming, repeated until stable.
    pub fn fold_word(&self, word: &str) -> String {
        let mut current = word.to_lowercase();
        for _ in 0..8 {
            let mut next = match self.synonyms.get(&current) {
                Some(s) => s.clone(),
                None => current.clone(),
            };
            next = self.stem(&next);
            if next == current {
                break;
            }
            current = next;
        }
        current
    }

    /// Applies the suffix rules until none matches.
    pub fn stem(&self, word: &str) -> String {
        if word.chars().any(|c| !c.is_alphabetic()) {
            return word.to_string();
        }
        let mut current = word.to_string();
        loop {
            let mut changed = false;
            for rule in &self.stemmer_rules {
                if let Some(stem) = current.strip_suffix(rule.suffix.as_str()) {
                    if stem.chars().count() >= rule.min_stem {
                        current = format!("{stem}{}", rule.replacement);
                        changed = true;
                        break;
                    }
                }
            }
            if !changed {
                return current;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RawKind {
    Word,
    /// Question-number shapes that keep their punctuation: `1.a`, `(a)`, `1(a)`.
    Question,
    Operator,
}

#[derive(Debug, Clone)]
pub(crate) struct RawToken {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    kind: RawKind,
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\d+\.[a-z](?:[^\p{L}\p{N}]|$)|\d+\([a-z]\)|\([a-z]\)|[\p{L}\p{N}]+(?:'[\p{L}]+)?|[+\-=*/^()<>]")
            .unwrap()
    })
}

/// Splits text into words, question-number shapes and operator characters, with
/// character offsets. Other punctuation is dropped here.
pub(crate) fn raw_tokens(text: &str) -> Vec<RawToken> {
    let byte_to_char = byte_char_index(text);
    let mut out = Vec::new();
    for m in token_regex().find_iter(text) {
        let mut s = m.as_str();
        // the `1.a` alternative consumes one trailing boundary character
        if s.len() > 2 && s.as_bytes()[0].is_ascii_digit() && s.contains('.') {
            let last = s.chars().last().unwrap();
            if !last.is_alphanumeric() {
                s = &s[..s.len() - last.len_utf8()];
            }
        }
        let start = byte_to_char[m.start()];
        let end = start + s.chars().count();
        let kind = if s.contains('.') || s.contains('(') && s.len() > 1 {
            RawKind::Question
        } else if s.chars().count() == 1 && !s.chars().next().unwrap().is_alphanumeric() {
            RawKind::Operator
        } else {
            RawKind::Word
        };
        out.push(RawToken { surface: s.to_string(), start, end, kind });
    }
    out
}

fn byte_char_index(text: &str) -> Vec<usize> {
    let mut map = vec![0; text.len() + 1];
    let mut ci = 0;
    for (bi, ch) in text.char_indices() {
        for k in 0..ch.len_utf8() {
            map[bi + k] = ci;
        }
        ci += 1;
    }
    map[text.len()] = ci;
    map
}

/// Lowercased words of `text` with character spans, before any filtering.
pub fn words(text: &str) -> Vec<(String, usize, usize)> {
    raw_tokens(text)
        .into_iter()
        .filter(|t| t.kind != RawKind::Operator)
        .map(|t| (t.surface.to_lowercase(), t.start, t.end))
        .collect()
}

/// Value of a roman numeral in `1..=limit`, or `None`.
pub fn roman_value(word: &str, limit: u32) -> Option<u32> {
    let upper = word.to_ascii_uppercase();
    if upper.is_empty() || !upper.chars().all(|c| matches!(c, 'I' | 'V' | 'X' | 'L' | 'C')) {
        return None;
    }
    // generate canonical numerals and compare, which rejects forms like "IIII" or "VX"
    (1..=limit).find(|&n| to_roman(n) == upper)
}

/// Canonical upper-case roman numeral for `n`.
pub fn to_roman(mut n: u32) -> String {
    const TABLE: [(u32, &str); 9] =
        [(100, "C"), (90, "XC"), (50, "L"), (40, "XL"), (10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I")];
    let mut out = String::new();
    for (value, sym) in TABLE {
        while n >= value {
            out.push_str(sym);
            n -= value;
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Work {
    raw: RawToken,
    normal: String,
    contextual: bool,
    keep: bool,
}

impl Work {
    fn is_numberish(&self) -> bool {
        self.normal.chars().any(|c| c.is_ascii_digit())
    }
}

/// Normalizes raw user text. Total: never fails, unknown characters pass through.
pub fn normalize(text: &str, cfg: &NormalizerConfig) -> NormalizedText {
    let mut rules = BTreeSet::new();
    let raw = raw_tokens(text);

    let mut items: Vec<Work> = Vec::with_capacity(raw.len());
    for r in raw {
        if r.kind == RawKind::Operator {
            items.push(Work { normal: r.surface.clone(), raw: r, contextual: false, keep: false });
            continue;
        }
        let lower = r.surface.to_lowercase();
        if lower != r.surface {
            rules.insert(RuleId::Lowercase);
        }
        let normal = if r.kind == RawKind::Question { lower.clone() } else { cfg.fold_word(&lower) };
        let stop = r.kind == RawKind::Word
            && (cfg.is_stopword(&lower) || cfg.is_stopword(&normal))
            && !is_roman_anchor_candidate(&r.surface, cfg);
        items.push(Work { normal, raw: r, contextual: false, keep: !stop });
    }
    if items.iter().any(|w| w.raw.kind == RawKind::Operator) {
        rules.insert(RuleId::Punctuation);
    }
    if text.chars().any(|c| !c.is_alphanumeric() && !c.is_whitespace() && !"+-=*/^()<>".contains(c)) {
        rules.insert(RuleId::Punctuation);
    }

    // Context steps run on the sequence with stopwords dropped so that a second pass
    // over the rendered output sees the same neighbours.
    let anchors: BTreeSet<String> = cfg.ordinal_anchors.iter().map(|a| cfg.fold_word(a)).collect();
    let seq: Vec<usize> = (0..items.len()).filter(|&i| items[i].keep).collect();
    let anchor_adjacent = |pos: usize, items: &[Work]| -> bool {
        let prev = pos.checked_sub(1).map(|p| &items[seq[p]].normal);
        let next = seq.get(pos + 1).map(|&n| &items[n].normal);
        prev.is_some_and(|p| anchors.contains(p)) || next.is_some_and(|n| anchors.contains(n))
    };
    for pos in 0..seq.len() {
        let i = seq[pos];
        if items[i].raw.kind != RawKind::Word {
            continue;
        }
        let lower = items[i].raw.surface.to_lowercase();
        if let Some(digit) = cfg.ordinal_words.get(&lower) {
            if anchor_adjacent(pos, &items) {
                items[i].normal = digit.clone();
                items[i].contextual = true;
                rules.insert(RuleId::Ordinal);
                continue;
            }
        }
        if let Some(n) = roman_value(&items[i].raw.surface, cfg.roman_numeral_limit) {
            let surface = &items[i].raw.surface;
            let uppercase_multi = surface.chars().count() >= 2 && surface.chars().all(|c| c.is_ascii_uppercase());
            // "Chapter I" yes, "I ... chapter" no: numerals follow their anchor
            let after_anchor = pos > 0 && anchors.contains(&items[seq[pos - 1]].normal);
            if uppercase_multi || after_anchor {
                items[i].normal = n.to_string();
                items[i].contextual = true;
                rules.insert(RuleId::RomanNumeral);
            }
        }
    }
    // tokens that were roman-numeral candidates but did not convert fall back to the
    // stopword check
    for w in items.iter_mut() {
        if w.keep && w.raw.kind == RawKind::Word && !w.contextual {
            let lower = w.raw.surface.to_lowercase();
            if cfg.is_stopword(&lower) || cfg.is_stopword(&w.normal) {
                w.keep = false;
            }
        }
    }

    // Formula variables: drop until stable, since removing one can expose another.
    loop {
        let seq: Vec<usize> = (0..items.len())
            .filter(|&i| items[i].keep || items[i].raw.kind == RawKind::Operator)
            .collect();
        let mut removed = false;
        for pos in 0..seq.len() {
            let i = seq[pos];
            if !items[i].keep || !cfg.math_variable_symbols.contains(&items[i].normal) {
                continue;
            }
            let formula_like = |j: usize| {
                let w = &items[j];
                w.raw.kind == RawKind::Operator || w.is_numberish() || w.raw.surface.contains('(')
            };
            let prev = pos.checked_sub(1).map(|p| seq[p]);
            let next = seq.get(pos + 1).copied();
            if prev.is_some_and(formula_like) || next.is_some_and(formula_like) {
                items[i].keep = false;
                rules.insert(RuleId::MathVariable);
                removed = true;
                break;
            }
        }
        if !removed {
            break;
        }
    }

    let mut tokens = Vec::new();
    for w in items {
        if w.raw.kind == RawKind::Operator {
            continue;
        }
        if !w.keep {
            if !cfg.math_variable_symbols.contains(&w.normal) {
                rules.insert(RuleId::Stopword);
            }
            continue;
        }
        if !w.contextual && w.raw.kind == RawKind::Word {
            let lower = w.raw.surface.to_lowercase();
            if let Some(syn) = cfg.synonyms.get(&lower) {
                if syn != &lower {
                    rules.insert(RuleId::Synonym);
                }
            }
            if w.normal != lower && cfg.synonyms.get(&lower).is_none_or(|s| *s != w.normal) {
                rules.insert(RuleId::Stem);
            }
        }
        tokens.push(Token {
            surface: w.raw.surface,
            normal: w.normal,
            start: w.raw.start,
            end: w.raw.end,
            contextual: w.contextual,
        });
    }
    NormalizedText { original: text.to_string(), tokens, applied_rules: rules.into_iter().collect() }
}

/// Single letters such as "I" or "V" are stopwords in some languages but may be
/// roman numerals next to an anchor word; they survive the first stopword pass.
fn is_roman_anchor_candidate(surface: &str, cfg: &NormalizerConfig) -> bool {
    roman_value(surface, cfg.roman_numeral_limit).is_some() && surface.chars().all(|c| c.is_ascii_uppercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normals(text: &str) -> Vec<String> {
        normalize(text, &NormalizerConfig::default()).tokens.into_iter().map(|t| t.normal).collect()
    }

    #[test]
    fn chapter_roman_numeral() {
        assert_eq!(normals("Chapter IV"), vec!["chapter", "4"]);
        assert_eq!(normals("Kapitel II"), vec!["kapitel", "2"]);
    }

    #[test]
    fn empty_input() {
        assert!(normals("").is_empty());
        assert!(normals("  ,.!  ").is_empty());
    }

    #[test]
    fn ordinal_next_to_anchor() {
        assert_eq!(normals("in first Chapter"), vec!["1", "chapter"]);
        assert_eq!(normals("the second exercise"), vec!["2", "exerci"]);
        // no anchor nearby: the word stays
        assert_eq!(normals("first of all"), vec!["first"]);
    }

    #[test]
    fn training_exercise_folds_to_training() {
        assert_eq!(normals("Trainingsaufgabe"), vec!["training"]);
    }

    #[test]
    fn pronoun_is_not_a_numeral() {
        assert_eq!(normals("I have difficulties in Chapter I"), vec!["chapter", "1"]);
    }

    #[test]
    fn bare_numerals_untouched() {
        assert_eq!(normals("4"), vec!["4"]);
        assert_eq!(normals("chapter 4"), vec!["chapter", "4"]);
    }

    #[test]
    fn math_variable_removed_only_in_formulas() {
        assert_eq!(normals("solve x + 3 = 5"), vec!["3", "5"]);
        assert_eq!(normals("2 * x"), vec!["2"]);
        assert_eq!(normals("Chapter X"), vec!["chapter", "10"]);
        assert_eq!(normals("x marks"), vec!["x", "mark"]);
    }

    #[test]
    fn question_number_shapes_keep_punctuation() {
        assert_eq!(normals("Exercise 1.a"), vec!["exerci", "1.a"]);
        assert_eq!(normals("Exercise 5 (a)"), vec!["exerci", "5", "(a)"]);
        assert_eq!(normals("1(a)"), vec!["1(a)"]);
    }

    #[test]
    fn spans_point_into_original() {
        let text = "Übung IV: Brüche";
        let n = normalize(text, &NormalizerConfig::default());
        for t in &n.tokens {
            assert_eq!(n.slice(t.start, t.end), t.surface);
        }
    }

    #[test]
    fn synonym_chain_rejected() {
        let mut cfg = NormalizerConfig::default();
        cfg.synonyms.insert("a1".into(), "b1".into());
        cfg.synonyms.insert("b1".into(), "c1".into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn roman_limit_enforced() {
        let cfg = NormalizerConfig { roman_numeral_limit: 5, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert_eq!(roman_value("XX", 20), Some(20));
        assert_eq!(roman_value("XXI", 20), None);
        assert_eq!(roman_value("IIII", 20), None);
    }

    #[test]
    fn protected_titles_survive() {
        let mut cfg = NormalizerConfig::default();
        cfg.stopwords.insert("geometry".into());
        cfg.protect(["Geometry"]);
        let n = normalize("geometry", &cfg);
        assert_eq!(n.tokens.len(), 1);
    }
}
