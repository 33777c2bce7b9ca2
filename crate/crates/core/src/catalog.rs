//! Course catalog and fuzzy retrieval over it.
//!
//! Entries are indexed by the normal forms of their titles and synonyms. A query term
//! matches an index term when the first `prefix_length` characters agree and the rest
//! is within `max_edit_distance` edits. Scores are a closed-form sum, see [`search`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::normalizer::{normalize, NormalizedText, NormalizerConfig};

const DEFAULT_CATALOG: &str = include_str!("../data/catalog.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Topic,
    Subtopic,
    ExamMode,
    Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExamMode {
    Training,
    Exercise,
    Quiz,
    FinalExamination,
}

impl ExamMode {
    pub const ALL: [ExamMode; 4] = [ExamMode::Training, ExamMode::Exercise, ExamMode::Quiz, ExamMode::FinalExamination];

    pub fn as_str(self) -> &'static str {
        match self {
            ExamMode::Training => "training",
            ExamMode::Exercise => "exercise",
            ExamMode::Quiz => "quiz",
            ExamMode::FinalExamination => "final_examination",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Chapter,
    Section,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Chapter => "chapter",
            Level::Section => "section",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "chapter" => Some(Level::Chapter),
            "section" => Some(Level::Section),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub kind: EntryKind,
    pub title: String,
    #[serde(default)]
    pub number: Option<String>,
    #[serde(default)]
    pub parent: Option<String>,
    /// Mode or level name for `exam_mode` / `level` entries.
    #[serde(default)]
    pub value: Option<String>,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub permalinks: Vec<String>,
}

impl CatalogEntry {
    pub fn new(id: &str, kind: EntryKind, title: &str) -> Self {
        CatalogEntry {
            id: id.into(),
            kind,
            title: title.into(),
            number: None,
            parent: None,
            value: None,
            synonyms: Vec::new(),
            permalinks: Vec::new(),
        }
    }

    pub fn exam_mode(&self) -> Option<ExamMode> {
        (self.kind == EntryKind::ExamMode).then(|| self.value.as_deref().and_then(ExamMode::parse)).flatten()
    }

    pub fn level(&self) -> Option<Level> {
        (self.kind == EntryKind::Level).then(|| self.value.as_deref().and_then(Level::parse)).flatten()
    }
}

#[derive(Debug, Deserialize)]
struct CatalogFile {
    #[serde(default)]
    entry: Vec<CatalogEntry>,
}

/// Parses a catalog file. Structural checks happen in [`build_index`].
pub fn parse_catalog(text: &str) -> Result<Vec<CatalogEntry>, ConfigError> {
    let file: CatalogFile =
        toml::from_str(text).map_err(|e| ConfigError::Parse { what: "catalog", message: e.to_string() })?;
    Ok(file.entry)
}

pub fn load_catalog(path: &Path) -> Result<Vec<CatalogEntry>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
    parse_catalog(&text)
}

/// The bundled catalog: 13 topics with their sections, four exam modes, two levels.
pub fn default_entries() -> Vec<CatalogEntry> {
    parse_catalog(DEFAULT_CATALOG).expect("bundled catalog parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub min_should_match: f64,
    pub max_edit_distance: usize,
    pub prefix_length: usize,
    pub relevance_threshold: f64,
    pub title_boost: f64,
    pub synonym_boost: f64,
    /// Weight of the most recent previous turn; older turns get powers of it.
    pub history_weight: f64,
    /// Tokens shorter than `prefix_length + 3` only match exactly.
    pub exact_short_tokens: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            min_should_match: 0.20,
            max_edit_distance: 2,
            prefix_length: 1,
            relevance_threshold: 1.5,
            title_boost: 2.0,
            synonym_boost: 1.5,
            history_weight: 0.5,
            exact_short_tokens: true,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.min_should_match > 0.0 && self.min_should_match <= 1.0) {
            return Err(ConfigError::Invalid(format!("min_should_match must be in (0, 1], got {}", self.min_should_match)));
        }
        if self.max_edit_distance > 2 {
            return Err(ConfigError::Invalid(format!("max_edit_distance must be at most 2, got {}", self.max_edit_distance)));
        }
        if self.relevance_threshold.is_nan() || self.relevance_threshold < 0.0 {
            return Err(ConfigError::Invalid("relevance_threshold must be non-negative".into()));
        }
        if !(self.history_weight > 0.0 && self.history_weight < 1.0) {
            return Err(ConfigError::Invalid("history_weight must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Title,
    Synonym,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedTerm {
    pub query_term: String,
    pub index_term: String,
    pub distance: usize,
    /// 0 for the current turn, k for the k-th previous turn.
    pub age: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub entry_id: String,
    pub score: f64,
    pub matched_terms: Vec<MatchedTerm>,
}

impl SearchHit {
    pub fn has_current_match(&self) -> bool {
        self.matched_terms.iter().any(|m| m.age == 0)
    }
}

/// Immutable search index over catalog entries.
#[derive(Debug, Clone)]
pub struct CatalogIndex {
    entries: Vec<CatalogEntry>,
    by_id: HashMap<String, usize>,
    /// term -> (entry position, field); set semantics per term
    postings: BTreeMap<String, BTreeSet<(usize, Field)>>,
    /// term -> lowercase words it was derived from, for fuzzy matching before stemming
    surfaces: BTreeMap<String, BTreeSet<String>>,
    normalizer: NormalizerConfig,
}

/// Builds the index. Single-word titles and synonyms are protected from stopword
/// removal in the returned index's normalizer so that queries and index agree.
pub fn build_index(entries: Vec<CatalogEntry>, cfg: &NormalizerConfig) -> Result<CatalogIndex, ConfigError> {
    let mut by_id = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        if e.id.trim().is_empty() {
            return Err(ConfigError::Invalid(format!("catalog entry #{i} has an empty id")));
        }
        if by_id.insert(e.id.clone(), i).is_some() {
            return Err(ConfigError::Invalid(format!("duplicate catalog entry id {}", e.id)));
        }
        if e.title.trim().is_empty() {
            return Err(ConfigError::Invalid(format!("catalog entry {} has an empty title", e.id)));
        }
    }
    for e in &entries {
        match e.kind {
            EntryKind::Subtopic => {
                let parent = e
                    .parent
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid(format!("subtopic {} has no parent", e.id)))?;
                match by_id.get(parent).map(|&i| entries[i].kind) {
                    Some(EntryKind::Topic) => {}
                    _ => return Err(ConfigError::Invalid(format!("subtopic {} has parent {parent} which is not a topic", e.id))),
                }
            }
            EntryKind::ExamMode if e.exam_mode().is_none() => {
                return Err(ConfigError::Invalid(format!("exam mode {} has unknown value {:?}", e.id, e.value)));
            }
            EntryKind::Level if e.level().is_none() => {
                return Err(ConfigError::Invalid(format!("level {} has unknown value {:?}", e.id, e.value)));
            }
            _ => {}
        }
    }

    let mut normalizer = cfg.clone();
    for e in &entries {
        for name in std::iter::once(&e.title).chain(&e.synonyms) {
            let words = crate::normalizer::words(name);
            if words.len() == 1 {
                normalizer.protect([words[0].0.as_str()]);
            }
        }
    }

    let mut postings: BTreeMap<String, BTreeSet<(usize, Field)>> = BTreeMap::new();
    let mut surfaces: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let fields = std::iter::once((&e.title, Field::Title)).chain(e.synonyms.iter().map(|s| (s, Field::Synonym)));
        for (text, field) in fields {
            for tok in normalize(text, &normalizer).tokens {
                if let Some(form) = surface_form(&tok) {
                    surfaces.entry(tok.normal.clone()).or_default().insert(form);
                }
                postings.entry(tok.normal).or_default().insert((i, field));
            }
        }
    }
    Ok(CatalogIndex { entries, by_id, postings, surfaces, normalizer })
}

impl CatalogIndex {
    /// Index over the bundled catalog with the bundled normalizer settings.
    pub fn bundled() -> Self {
        build_index(default_entries(), &NormalizerConfig::default()).expect("bundled catalog is valid")
    }

    pub fn empty(cfg: &NormalizerConfig) -> Self {
        build_index(Vec::new(), cfg).expect("empty catalog is valid")
    }

    pub fn normalizer(&self) -> &NormalizerConfig {
        &self.normalizer
    }

    pub fn normalize(&self, text: &str) -> NormalizedText {
        normalize(text, &self.normalizer)
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lowercase words that normalize to `term`.
    pub fn surfaces(&self, term: &str) -> impl Iterator<Item = &str> + Clone {
        self.surfaces.get(term).into_iter().flatten().map(String::as_str)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Entries whose normalized title or synonyms contain `term`.
    pub fn postings(&self, term: &str) -> Vec<(&CatalogEntry, Field)> {
        self.postings
            .get(term)
            .map(|set| set.iter().map(|&(i, f)| (&self.entries[i], f)).collect())
            .unwrap_or_default()
    }

    pub fn of_kind(&self, kind: EntryKind) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    pub fn topic_by_number(&self, number: &str) -> Option<&CatalogEntry> {
        self.of_kind(EntryKind::Topic).find(|e| e.number.as_deref() == Some(number))
    }

    pub fn exam_mode_entry(&self, mode: ExamMode) -> Option<&CatalogEntry> {
        self.of_kind(EntryKind::ExamMode).find(|e| e.exam_mode() == Some(mode))
    }

    pub fn level_entry(&self, level: Level) -> Option<&CatalogEntry> {
        self.of_kind(EntryKind::Level).find(|e| e.level() == Some(level))
    }

    /// `ln(1 + N / df)`; terms absent from the index get the maximum value.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.entries.len().max(1) as f64;
        let df = self
            .postings
            .get(term)
            .map(|s| s.iter().map(|&(i, _)| i).collect::<BTreeSet<_>>().len())
            .unwrap_or(0)
            .max(1) as f64;
        (1.0 + n / df).ln()
    }
}

/// Levenshtein distance over Unicode scalar values with a two-row table.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance between a query term and an index term under the prefix and
/// short-token rules, or `None` if they do not match.
pub fn term_distance(query: &str, term: &str, params: &SearchParams) -> Option<usize> {
    let q: Vec<char> = query.chars().collect();
    let t: Vec<char> = term.chars().collect();
    if q == t {
        return Some(0);
    }
    // below four characters (with the default prefix) only exact matches count
    let short = params.prefix_length + 3;
    if params.exact_short_tokens && (q.len() < short || t.len() < short) {
        return None;
    }
    let p = params.prefix_length;
    if q.len() < p || t.len() < p || q[..p] != t[..p] {
        return None;
    }
    // cheap length bound before the table
    if q.len().abs_diff(t.len()) > params.max_edit_distance {
        return None;
    }
    let d = levenshtein_chars(&q[p..], &t[p..]);
    (d <= params.max_edit_distance).then_some(d)
}

/// Lowercase surface of a word token whose normal form came from the word alone.
pub(crate) fn surface_form(tok: &crate::normalizer::Token) -> Option<String> {
    (!tok.contextual && tok.surface.chars().all(char::is_alphabetic)).then(|| tok.surface.to_lowercase())
}

/// Distance between a query term and an index term: the better of comparing the
/// normal forms and comparing the words they came from. Stemming can strip a suffix
/// from the correct spelling but not from a misspelled one ("convergence" vs
/// "convergense"), so fuzzy matching also looks at the unstemmed words.
pub fn best_distance<'a>(
    query: &str,
    query_surfaces: impl IntoIterator<Item = &'a str>,
    term: &str,
    term_surfaces: impl IntoIterator<Item = &'a str> + Clone,
    params: &SearchParams,
) -> Option<usize> {
    let mut best = term_distance(query, term, params);
    if best == Some(0) {
        return best;
    }
    for qs in query_surfaces {
        for ts in term_surfaces.clone() {
            if let Some(d) = term_distance(qs, ts, params) {
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
    }
    best
}

/// A query term with the weight of the turn it came from.
#[derive(Debug, Clone)]
struct QueryTerm {
    text: String,
    surfaces: BTreeSet<String>,
    weight: f64,
    age: usize,
}

/// Distinct normal forms in text order, each with the words it came from.
fn unique_terms(text: &NormalizedText) -> Vec<(String, BTreeSet<String>)> {
    let mut out: Vec<(String, BTreeSet<String>)> = Vec::new();
    for tok in &text.tokens {
        let i = match out.iter().position(|(t, _)| *t == tok.normal) {
            Some(i) => i,
            None => {
                out.push((tok.normal.clone(), BTreeSet::new()));
                out.len() - 1
            }
        };
        out[i].1.extend(surface_form(tok));
    }
    out
}

/// Ranked fuzzy search.
///
/// `score(entry) = Σ_q idf(t) · (1 − d/(max_edit_distance+1)) · boost(field) · w(q)`
/// over matched query terms `q`, taking for each `q` the best-scoring index term `t`
/// of the entry. Hits below the relevance threshold are dropped; ties are ordered by
/// entry id.
pub fn search(index: &CatalogIndex, query: &NormalizedText, params: &SearchParams) -> Vec<SearchHit> {
    search_with_history(index, query, &[], params)
}

/// Search over the current turn plus earlier turns (oldest first). A term from the
/// k-th previous turn is weighted `history_weight^k`; a term seen in several turns
/// keeps its most recent occurrence.
///
/// Eligibility counts matched terms from all turns against the number of distinct
/// current-turn terms, so a short answer such as "5 a" keeps the topic that the
/// history established.
pub fn search_with_history(
    index: &CatalogIndex,
    current: &NormalizedText,
    history: &[NormalizedText],
    params: &SearchParams,
) -> Vec<SearchHit> {
    let current_terms = unique_terms(current);
    let mut terms: Vec<QueryTerm> = current_terms
        .iter()
        .map(|(t, s)| QueryTerm { text: t.clone(), surfaces: s.clone(), weight: 1.0, age: 0 })
        .collect();
    let mut seen: BTreeSet<String> = current_terms.iter().map(|(t, _)| t.clone()).collect();
    for (k, turn) in history.iter().rev().enumerate() {
        let age = k + 1;
        let weight = params.history_weight.powi(age as i32);
        for (t, surfaces) in unique_terms(turn) {
            if seen.insert(t.clone()) {
                terms.push(QueryTerm { text: t, surfaces, weight, age });
            }
        }
    }
    if terms.is_empty() || index.is_empty() {
        return Vec::new();
    }

    // (entry, query term) -> best (contribution, matched term)
    let mut best: BTreeMap<(usize, usize), (f64, MatchedTerm)> = BTreeMap::new();
    for (qi, q) in terms.iter().enumerate() {
        for (term, posting) in &index.postings {
            let q_surfaces = q.surfaces.iter().map(String::as_str);
            let Some(d) = best_distance(&q.text, q_surfaces, term, index.surfaces(term), params) else { continue };
            let sim = 1.0 - d as f64 / (params.max_edit_distance as f64 + 1.0);
            let idf = index.idf(term);
            for &(ei, field) in posting {
                let boost = match field {
                    Field::Title => params.title_boost,
                    Field::Synonym => params.synonym_boost,
                };
                let contribution = idf * sim * boost * q.weight;
                let slot = best.entry((ei, qi)).or_insert_with(|| {
                    (f64::NEG_INFINITY, MatchedTerm { query_term: String::new(), index_term: String::new(), distance: 0, age: 0 })
                });
                if contribution > slot.0 {
                    *slot = (
                        contribution,
                        MatchedTerm { query_term: q.text.clone(), index_term: term.clone(), distance: d, age: q.age },
                    );
                }
            }
        }
    }

    let required = (params.min_should_match * current_terms.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    let mut per_entry: BTreeMap<usize, (f64, Vec<MatchedTerm>)> = BTreeMap::new();
    for ((ei, _), (c, m)) in best {
        let e = per_entry.entry(ei).or_insert((0.0, Vec::new()));
        e.0 += c;
        e.1.push(m);
    }
    let mut hits: Vec<SearchHit> = per_entry
        .into_iter()
        .filter(|(_, (score, matched))| matched.len() >= required && *score >= params.relevance_threshold)
        .map(|(ei, (score, matched_terms))| SearchHit { entry_id: index.entries[ei].id.clone(), score, matched_terms })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entry_id.cmp(&b.entry_id)));
    hits
}

/// Slots recovered from a platform link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermalinkMatch {
    pub topic_id: String,
    pub exam_mode: Option<ExamMode>,
    /// Canonical question number (digits plus optional lowercase letter).
    pub question_number: Option<String>,
    /// Character span of the URL in the input text.
    pub start: usize,
    pub end: usize,
}

/// Finds the first URL in `text` that fits a topic's permalink template.
pub fn parse_permalink(index: &CatalogIndex, text: &str) -> Option<PermalinkMatch> {
    let mut char_pos = 0;
    for piece in text.split_inclusive(char::is_whitespace) {
        let trimmed = piece.trim_end();
        let candidate = trimmed.trim_end_matches(['.', ',', ';', ')', '!', '?']);
        if candidate.starts_with("http://") || candidate.starts_with("https://") {
            if let Some((topic_id, exam_mode, question_number)) = match_url(index, candidate) {
                let start = char_pos;
                let end = start + candidate.chars().count();
                return Some(PermalinkMatch { topic_id, exam_mode, question_number, start, end });
            }
        }
        char_pos += piece.chars().count();
    }
    None
}

fn match_url(index: &CatalogIndex, candidate: &str) -> Option<(String, Option<ExamMode>, Option<String>)> {
    let url = url::Url::parse(candidate).ok()?;
    let host = url.host_str()?.trim_start_matches("www.").to_ascii_lowercase();
    let segs: Vec<&str> = url.path_segments()?.filter(|s| !s.is_empty()).collect();
    for topic in index.of_kind(EntryKind::Topic) {
        for pattern in &topic.permalinks {
            let Ok(purl) = url::Url::parse(&pattern.replace("{mode}", "MODE").replace("{question}", "QUESTION")) else {
                continue;
            };
            if purl.host_str().map(|h| h.trim_start_matches("www.").to_ascii_lowercase()) != Some(host.clone()) {
                continue;
            }
            let Some(psegs) = purl.path_segments() else { continue };
            let psegs: Vec<&str> = psegs.filter(|s| !s.is_empty()).collect();
            // trailing placeholders may be omitted in the link
            if segs.len() > psegs.len() || segs.len() < psegs.iter().take_while(|s| !s.contains("MODE")).count() {
                continue;
            }
            let mut mode = None;
            let mut question = None;
            let mut ok = true;
            for (i, p) in psegs.iter().enumerate() {
                let Some(s) = segs.get(i) else { break };
                match *p {
                    "MODE" => match mode_from_slug(index, s) {
                        Some(m) => mode = Some(m),
                        None => ok = false,
                    },
                    "QUESTION" => question = canonical_question(s),
                    lit => ok &= lit.eq_ignore_ascii_case(s),
                }
                if !ok {
                    break;
                }
            }
            if ok {
                return Some((topic.id.clone(), mode, question));
            }
        }
    }
    None
}

fn mode_from_slug(index: &CatalogIndex, slug: &str) -> Option<ExamMode> {
    index
        .of_kind(EntryKind::ExamMode)
        .find(|e| e.permalinks.iter().any(|p| p.eq_ignore_ascii_case(slug)))
        .and_then(CatalogEntry::exam_mode)
}

/// `"5a"`, `"5-a"`, `"1.a"`, `"5"` -> canonical digits + lowercase letter.
fn canonical_question(seg: &str) -> Option<String> {
    let digits: String = seg.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() {
        return None;
    }
    let rest: String = seg[digits.len()..].chars().filter(|c| c.is_ascii_alphabetic()).collect();
    match rest.len() {
        0 => Some(digits),
        1 => Some(format!("{digits}{}", rest.to_ascii_lowercase())),
        _ => None,
    }
}
