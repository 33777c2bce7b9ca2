//! Intent classification by keyword rules and slot extraction by patterns plus fuzzy
//! catalog search.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{
    parse_permalink, search_with_history, best_distance, CatalogIndex, EntryKind, ExamMode, Level, SearchHit,
    SearchParams,
};
use crate::dictionary::{InformationDictionary, Provenance, Slot, SlotValue};
use crate::error::ConfigError;
use crate::normalizer::{raw_tokens, roman_value, NormalizedText, Token};

const DEFAULT_INTENTS: &str = include_str!("../data/intents.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Mathematical,
    Organizational,
    Contextual,
    Unknown,
}

impl Intent {
    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Mathematical => "mathematical",
            Intent::Organizational => "organizational",
            Intent::Contextual => "contextual",
            Intent::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
struct KeywordList {
    #[serde(default)]
    keywords: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
struct MenuWords {
    #[serde(default)]
    mathematical: Vec<String>,
    #[serde(default)]
    contextual: Vec<String>,
    #[serde(default)]
    organizational: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
struct AnchorList {
    #[serde(default)]
    anchors: Vec<String>,
}

/// Keyword rule file contents.
#[derive(Debug, Clone, Deserialize)]
pub struct IntentRules {
    #[serde(default)]
    mathematical: KeywordList,
    #[serde(default)]
    contextual: KeywordList,
    #[serde(default)]
    organizational: KeywordList,
    #[serde(default)]
    menu: MenuWords,
    #[serde(default)]
    human: KeywordList,
    #[serde(default)]
    question_number: AnchorList,
    #[serde(default)]
    references: AnchorList,
}

impl Default for IntentRules {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_INTENTS).expect("bundled intent rules are valid")
    }
}

impl IntentRules {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let rules: IntentRules =
            toml::from_str(text).map_err(|e| ConfigError::Parse { what: "intent rules", message: e.to_string() })?;
        if rules.human.keywords.is_empty() {
            return Err(ConfigError::Invalid("at least one human keyword is required".into()));
        }
        Ok(rules)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Keyword rules compiled against the catalog's normalizer.
#[derive(Debug, Clone)]
pub struct Nlu {
    index: CatalogIndex,
    params: SearchParams,
    intents: Vec<(Intent, Vec<Vec<String>>)>,
    menu: Vec<(Intent, BTreeSet<String>)>,
    human: BTreeSet<String>,
    qn_anchors: BTreeSet<String>,
    ref_anchors: BTreeSet<String>,
    /// (mode, normalized name) pairs, longest names first
    mode_names: Vec<(ExamMode, Vec<String>)>,
    level_words: Vec<(Level, String)>,
}

/// What the dialogue is waiting for, which licenses a few bare answers ("4", "1.2").
#[derive(Debug, Clone, Default)]
pub struct ExtractContext {
    pub awaiting: Option<Slot>,
    /// Resolved topic already in the dictionary.
    pub topic: Option<String>,
    /// Earlier user turns, oldest first.
    pub history: Vec<NormalizedText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotUpdate {
    pub slot: Slot,
    pub value: SlotValue,
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub intent: Intent,
    /// Span of the keyword that decided the intent.
    pub intent_span: Option<(usize, usize)>,
    pub slot_updates: Vec<SlotUpdate>,
    pub human_requested: bool,
    #[serde(skip)]
    pub normalized: Option<NormalizedText>,
}

impl ExtractionResult {
    pub fn update(&self, slot: Slot) -> Option<&SlotUpdate> {
        self.slot_updates.iter().find(|u| u.slot == slot)
    }
}

impl Nlu {
    pub fn new(index: CatalogIndex, rules: &IntentRules, params: SearchParams) -> Self {
        let norm_seq = |s: &str| -> Vec<String> { index.normalize(s).normals().map(str::to_string).collect() };
        let fold = |s: &str| index.normalizer().fold_word(&s.to_lowercase());
        let compile = |list: &KeywordList| -> Vec<Vec<String>> {
            let mut out: Vec<Vec<String>> = list.keywords.iter().map(|k| norm_seq(k)).filter(|v| !v.is_empty()).collect();
            out.dedup();
            out
        };
        let intents = vec![
            (Intent::Mathematical, compile(&rules.mathematical)),
            (Intent::Contextual, compile(&rules.contextual)),
            (Intent::Organizational, compile(&rules.organizational)),
        ];
        let lower = |v: &Vec<String>| v.iter().map(|s| s.to_lowercase()).collect::<BTreeSet<_>>();
        let menu = vec![
            (Intent::Mathematical, lower(&rules.menu.mathematical)),
            (Intent::Contextual, lower(&rules.menu.contextual)),
            (Intent::Organizational, lower(&rules.menu.organizational)),
        ];
        let human = rules.human.keywords.iter().map(|k| fold(k)).collect();
        let qn_anchors = rules.question_number.anchors.iter().map(|k| fold(k)).collect();
        let ref_anchors = rules.references.anchors.iter().map(|k| fold(k)).collect();

        let mut mode_names = Vec::new();
        let mut level_words = Vec::new();
        for e in index.entries() {
            let names = std::iter::once(&e.title).chain(&e.synonyms);
            if let Some(mode) = e.exam_mode() {
                for n in names {
                    let seq = norm_seq(n);
                    if !seq.is_empty() && !mode_names.iter().any(|(_, s)| *s == seq) {
                        mode_names.push((mode, seq));
                    }
                }
            } else if let Some(level) = e.level() {
                for n in names {
                    let seq = norm_seq(n);
                    if seq.len() == 1 && !level_words.iter().any(|(_, w)| *w == seq[0]) {
                        level_words.push((level, seq[0].clone()));
                    }
                }
            }
        }
        mode_names.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.cmp(b)));
        Nlu { index, params, intents, menu, human, qn_anchors, ref_anchors, mode_names, level_words }
    }

    /// Bundled catalog, rules and default parameters.
    pub fn bundled() -> Self {
        Nlu::new(CatalogIndex::bundled(), &IntentRules::default(), SearchParams::default())
    }

    pub fn index(&self) -> &CatalogIndex {
        &self.index
    }

    pub fn params(&self) -> &SearchParams {
        &self.params
    }

    pub fn normalize(&self, text: &str) -> NormalizedText {
        self.index.normalize(text)
    }

    /// True if any normalized token is a human keyword.
    pub fn is_human_request(&self, text: &NormalizedText) -> bool {
        text.normals().any(|t| self.human.contains(t))
    }

    /// Intent from keyword rules; mathematical beats contextual beats organizational.
    pub fn classify_intent(&self, text: &NormalizedText) -> (Intent, Option<(usize, usize)>) {
        let normals: Vec<&str> = text.normals().collect();
        for (intent, phrases) in &self.intents {
            for start in 0..normals.len() {
                for phrase in phrases {
                    let end = start + phrase.len();
                    if end <= normals.len() && normals[start..end].iter().zip(phrase).all(|(a, b)| a == b) {
                        let span = (text.tokens[start].start, text.tokens[end - 1].end);
                        return (*intent, Some(span));
                    }
                }
            }
        }
        (Intent::Unknown, None)
    }

    /// Manual choice from the intent menu ("MATH", "TEXT", "ORG").
    pub fn parse_menu_choice(&self, text: &str) -> Option<Intent> {
        let words = crate::normalizer::words(text);
        for (w, _, _) in &words {
            for (intent, set) in &self.menu {
                if set.contains(w) {
                    return Some(*intent);
                }
            }
        }
        None
    }

    /// Question number in the utterance, canonicalized to digits plus a lowercase
    /// letter, with its character span.
    pub fn extract_question_number(&self, text: &str, awaiting: bool) -> Option<(String, usize, usize)> {
        self.question_number_candidates(text, awaiting).into_iter().next()
    }

    fn question_number_candidates(&self, text: &str, awaiting: bool) -> Vec<(String, usize, usize)> {
        let chars: Vec<char> = text.chars().collect();
        let toks = raw_tokens(text);
        let gap = |a: usize, b: usize| -> String { chars[a..b].iter().collect() };
        let fold = |s: &str| self.index.normalizer().fold_word(&s.to_lowercase());
        let is_word = |s: &str| s.chars().all(char::is_alphanumeric);
        let mut out = Vec::new();

        for (i, t) in toks.iter().enumerate() {
            let s = t.surface.as_str();
            let prev = i.checked_sub(1).map(|p| &toks[p]);
            let prev_word = prev.filter(|p| is_word(&p.surface) && gap(p.end, t.start).trim().is_empty());
            let after_anchor = prev_word.is_some_and(|p| self.qn_anchors.contains(&fold(&p.surface)));
            let after_reference = prev_word.is_some_and(|p| self.ref_anchors.contains(&fold(&p.surface)));
            if after_reference {
                continue;
            }
            // part of a dotted number such as "7.2"
            if prev.is_some_and(|p| gap(p.end, t.start) == "." && p.surface.chars().all(|c| c.is_ascii_digit())) {
                continue;
            }

            // single-token shapes: "1.a", "1(a)", "5a"
            if let Some((num, letter)) = split_compact(s) {
                out.push((format!("{num}{letter}"), t.start, t.end));
                continue;
            }

            let number = if s.len() <= 3 && s.chars().all(|c| c.is_ascii_digit()) {
                Some(s.trim_start_matches('0').to_string()).filter(|n| !n.is_empty())
            } else if after_anchor || (awaiting && s.chars().all(|c| c.is_ascii_uppercase())) {
                roman_value(s, self.index.normalizer().roman_numeral_limit)
                    .filter(|_| s.chars().all(|c| c.is_ascii_uppercase()) || after_anchor)
                    .map(|n| n.to_string())
            } else {
                None
            };
            let Some(number) = number else { continue };
            let next = toks.get(i + 1);
            if next.is_some_and(|n| gap(t.end, n.start) == "." && n.surface.chars().all(|c| c.is_ascii_digit())) {
                continue;
            }

            // letter forms after the number: "5 (a)", "5 a"
            let mut letter: Option<(char, usize)> = None;
            if let Some(n) = next {
                let g = gap(t.end, n.start);
                if g.trim().is_empty() {
                    if let Some(l) = paren_letter(&n.surface) {
                        letter = Some((l, n.end));
                    } else if n.surface == "(" {
                        // "(" "a" ")" when the letter token was split off
                        if let (Some(l), Some(close)) = (toks.get(i + 2), toks.get(i + 3)) {
                            if single_letter(&l.surface).is_some() && close.surface == ")" {
                                letter = Some((single_letter(&l.surface).unwrap(), close.end));
                            }
                        }
                    } else if !g.is_empty() {
                        if let Some(l) = single_letter(&n.surface) {
                            if self.letter_can_end(&toks, i + 1, &chars) {
                                letter = Some((l, n.end));
                            }
                        }
                    }
                }
            }
            match letter {
                Some((l, end)) => out.push((format!("{number}{l}"), t.start, end)),
                None if after_anchor || awaiting => out.push((number, t.start, t.end)),
                None => {}
            }
        }
        out
    }

    /// A separated single letter counts as part of a question number only when the
    /// sentence does not continue with a content word ("1 a please" yes, "1 a bit" no).
    fn letter_can_end(&self, toks: &[crate::normalizer::RawToken], j: usize, chars: &[char]) -> bool {
        let Some(next) = toks.get(j + 1) else { return true };
        let g: String = chars[toks[j].end..next.start].iter().collect();
        if !g.trim().is_empty() {
            return true;
        }
        if !next.surface.chars().all(char::is_alphanumeric) {
            return true;
        }
        let lower = next.surface.to_lowercase();
        self.index.normalizer().stopwords.contains(&lower) || lower.chars().all(|c| c.is_ascii_digit())
    }

    /// Runs all extractors over one user message.
    pub fn extract(&self, text: &str, ctx: &ExtractContext) -> ExtractionResult {
        let normalized = self.normalize(text);
        let mut result = ExtractionResult {
            intent: Intent::Unknown,
            intent_span: None,
            slot_updates: Vec::new(),
            human_requested: false,
            normalized: None,
        };
        if self.is_human_request(&normalized) {
            result.human_requested = true;
            result.intent = self.classify_intent(&normalized).0;
            result.normalized = Some(normalized);
            return result;
        }

        // character positions claimed by an extractor; fuzzy search sees the rest
        let mut claimed: Vec<(usize, usize)> = Vec::new();
        let mut updates: Vec<SlotUpdate> = Vec::new();
        let push = |updates: &mut Vec<SlotUpdate>, u: SlotUpdate| {
            if let Some(old) = updates.iter_mut().find(|o| o.slot == u.slot) {
                *old = u;
            } else {
                updates.push(u);
            }
        };

        // permalink
        let mut masked = text.to_string();
        if let Some(m) = parse_permalink(&self.index, text) {
            push(&mut updates, SlotUpdate { slot: Slot::Topic, value: SlotValue::Entry(m.topic_id.clone()), start: m.start, end: m.end, confidence: 1.0 });
            if let Some(mode) = m.exam_mode {
                push(&mut updates, SlotUpdate { slot: Slot::ExamMode, value: SlotValue::Mode(mode), start: m.start, end: m.end, confidence: 1.0 });
            }
            if let Some(q) = m.question_number.clone() {
                push(&mut updates, SlotUpdate { slot: Slot::QuestionNumber, value: SlotValue::Text(q), start: m.start, end: m.end, confidence: 1.0 });
            }
            claimed.push((m.start, m.end));
            masked = text.chars().enumerate().map(|(i, c)| if i >= m.start && i < m.end { ' ' } else { c }).collect();
        }
        let work = self.normalize(&masked);
        let (intent, intent_span) = self.classify_intent(&work);
        result.intent = if intent == Intent::Unknown && !claimed.is_empty() { Intent::Mathematical } else { intent };
        result.intent_span = if intent == Intent::Unknown { claimed.first().copied() } else { intent_span };

        // chapter by number: "Chapter 4", "Kapitel IV", "first chapter"
        let toks = &work.tokens;
        let is_number = |t: &Token| !t.normal.is_empty() && t.normal.chars().all(|c| c.is_ascii_digit());
        let chapter_words: BTreeSet<String> = ["chapter", "kapitel"].iter().map(|w| self.index.normalizer().fold_word(w)).collect();
        let mut topic_from_number = false;
        for i in 0..toks.len() {
            if !chapter_words.contains(&toks[i].normal) {
                continue;
            }
            let found = if toks.get(i + 1).is_some_and(is_number) {
                Some((i + 1, toks[i].start, toks[i + 1].end))
            } else if i > 0 && toks[i - 1].contextual && is_number(&toks[i - 1]) {
                Some((i - 1, toks[i - 1].start, toks[i].end))
            } else {
                None
            };
            if let Some((ni, start, end)) = found {
                if let Some(topic) = self.index.topic_by_number(&toks[ni].normal) {
                    push(&mut updates, SlotUpdate { slot: Slot::Topic, value: SlotValue::Entry(topic.id.clone()), start, end, confidence: 1.0 });
                    claimed.push((start, end));
                    topic_from_number = true;
                }
            }
        }
        if !topic_from_number && ctx.awaiting == Some(Slot::Topic) && toks.len() == 1 && is_number(&toks[0]) {
            if let Some(topic) = self.index.topic_by_number(&toks[0].normal) {
                push(&mut updates, SlotUpdate { slot: Slot::Topic, value: SlotValue::Entry(topic.id.clone()), start: toks[0].start, end: toks[0].end, confidence: 1.0 });
                claimed.push((toks[0].start, toks[0].end));
                topic_from_number = true;
            }
        }

        // section by number: "Section 1.2", or a bare "1.2" when asked for the section
        let mut subtopic_from_number = false;
        if let Some((sub, start, end)) = self.section_by_number(&masked, ctx.awaiting == Some(Slot::Subtopic)) {
            push(&mut updates, SlotUpdate { slot: Slot::Subtopic, value: SlotValue::Entry(sub), start, end, confidence: 1.0 });
            claimed.push((start, end));
            subtopic_from_number = true;
        }

        // question number
        if let Some((q, start, end)) = self
            .question_number_candidates(&masked, ctx.awaiting == Some(Slot::QuestionNumber))
            .into_iter()
            .find(|(_, s, e)| !overlaps(&claimed, *s, *e))
        {
            push(&mut updates, SlotUpdate { slot: Slot::QuestionNumber, value: SlotValue::Text(q), start, end, confidence: 1.0 });
            claimed.push((start, end));
        }

        // level cue: a level word that does not introduce a number
        let mut level: Option<(Level, usize, usize)> = None;
        let mut level_next: Option<usize> = None;
        for (i, t) in toks.iter().enumerate() {
            if overlaps(&claimed, t.start, t.end) {
                continue;
            }
            let Some((lv, _)) = self.level_words.iter().find(|(_, w)| *w == t.normal) else { continue };
            if toks.get(i + 1).is_some_and(is_number) {
                continue;
            }
            // a section mention outweighs a chapter mention in the same message
            if level.is_none_or(|(cur, _, _)| cur == Level::Chapter || *lv == Level::Section) {
                level = Some((*lv, t.start, t.end));
                level_next = toks.get(i + 1).map(|n| n.start);
            }
        }
        if let Some((lv, start, end)) = level {
            push(&mut updates, SlotUpdate { slot: Slot::ExamLevel, value: SlotValue::Level(lv), start, end, confidence: 1.0 });
            claimed.push((start, end));
        }

        // exam mode: contiguous name match, fuzzy single words as a fallback
        let mut mode: Option<(ExamMode, usize, usize, f64)> = None;
        let mut i = 0;
        while i < toks.len() {
            if overlaps(&claimed, toks[i].start, toks[i].end) {
                i += 1;
                continue;
            }
            let mut matched = None;
            for (m, seq) in &self.mode_names {
                let end = i + seq.len();
                if end <= toks.len() && toks[i..end].iter().zip(seq).all(|(t, s)| t.normal == *s) {
                    matched = Some((*m, end, 1.0));
                    break;
                }
            }
            if matched.is_none() && toks[i].normal.chars().count() >= 5 {
                let mut best: Option<(ExamMode, usize)> = None;
                for (m, seq) in &self.mode_names {
                    if seq.len() != 1 || seq[0].chars().count() < 5 {
                        continue;
                    }
                    let surface = crate::catalog::surface_form(&toks[i]);
                    let surfaces = surface.iter().map(String::as_str);
                    if let Some(d) = best_distance(&toks[i].normal, surfaces, &seq[0], self.index.surfaces(&seq[0]), &self.params) {
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((*m, d));
                        }
                    }
                }
                if let Some((m, d)) = best {
                    matched = Some((m, i + 1, 1.0 - d as f64 / (self.params.max_edit_distance as f64 + 1.0)));
                }
            }
            match matched {
                Some((m, end, conf)) => {
                    mode = Some((m, toks[i].start, toks[end - 1].end, conf));
                    i = end;
                }
                None => i += 1,
            }
        }
        if let Some((m, start, end, conf)) = mode {
            if updates.iter().all(|u| u.slot != Slot::ExamMode) {
                push(&mut updates, SlotUpdate { slot: Slot::ExamMode, value: SlotValue::Mode(m), start, end, confidence: conf });
            }
            claimed.push((start, end));
        }

        // "number 2": the anchor word belongs to the question number, not to a title
        if let Some(qn) = updates.iter().find(|u| u.slot == Slot::QuestionNumber && u.start > 0) {
            let fold = |s: &str| self.index.normalizer().fold_word(&s.to_lowercase());
            if let Some(t) = toks.iter().rev().find(|t| t.end <= qn.start) {
                let between: String = masked.chars().skip(t.end).take(qn.start - t.end).collect();
                if between.trim().is_empty() && self.qn_anchors.contains(&fold(&t.surface)) && !overlaps(&claimed, t.start, t.end) {
                    claimed.push((t.start, t.end));
                }
            }
        }

        // topic and subtopic by fuzzy search over the unclaimed tokens
        let query = NormalizedText {
            original: work.original.clone(),
            tokens: toks.iter().filter(|t| !overlaps(&claimed, t.start, t.end)).cloned().collect(),
            applied_rules: work.applied_rules.clone(),
        };
        let hits = search_with_history(&self.index, &query, &ctx.history, &self.params);
        let kind_of = |h: &SearchHit| self.index.get(&h.entry_id).map(|e| e.kind);
        let parent_of = |h: &SearchHit| self.index.get(&h.entry_id).and_then(|e| e.parent.clone());
        let current: Vec<&SearchHit> = hits.iter().filter(|h| h.has_current_match()).collect();
        let topic_hit = current.iter().find(|h| kind_of(h) == Some(EntryKind::Topic)).copied();
        let subtopics: Vec<&SearchHit> = current.iter().filter(|h| kind_of(h) == Some(EntryKind::Subtopic)).copied().collect();

        let anchor_topic = if topic_from_number {
            updates.iter().find(|u| u.slot == Slot::Topic).map(|u| u.value.canonical())
        } else {
            topic_hit.map(|h| h.entry_id.clone()).or_else(|| ctx.topic.clone())
        };
        let mut sub_hit = subtopics.first().copied();
        if let Some(anchor) = &anchor_topic {
            if let Some(h) = subtopics.iter().find(|h| parent_of(h).as_deref() == Some(anchor.as_str())) {
                sub_hit = Some(*h);
            }
        }
        let mut emit_topic = !topic_from_number && topic_hit.is_some();
        // asked for the section: a section of the current chapter wins over other chapters
        let mut sub_from_context = false;
        if ctx.awaiting == Some(Slot::Subtopic) && !topic_from_number {
            if let Some(cur) = &ctx.topic {
                if let Some(h) = subtopics.iter().find(|h| parent_of(h).as_deref() == Some(cur.as_str())) {
                    sub_hit = Some(*h);
                    emit_topic = false;
                    sub_from_context = true;
                }
            }
        }
        if let (Some(t), Some(s)) = (topic_hit, sub_hit) {
            if emit_topic && parent_of(s).as_deref() != Some(t.entry_id.as_str()) {
                if s.score > t.score {
                    emit_topic = false;
                } else {
                    sub_hit = None;
                }
            }
        }
        // a subtopic resting only on words that already named the topic is an echo
        let topic_agrees = |t: &SearchHit| emit_topic || anchor_topic.as_deref() == Some(t.entry_id.as_str());
        if let (Some(t), Some(s), false) = (topic_hit.filter(|t| topic_agrees(t)), sub_hit, sub_from_context) {
            let words = |h: &SearchHit| -> BTreeSet<String> {
                h.matched_terms.iter().filter(|m| m.age == 0).map(|m| m.query_term.clone()).collect()
            };
            if words(s).is_subset(&words(t)) && t.score >= s.score {
                sub_hit = None;
            }
        }
        if topic_from_number {
            if let (Some(anchor), Some(s)) = (&anchor_topic, sub_hit) {
                if parent_of(s).as_deref() != Some(anchor.as_str()) {
                    sub_hit = None;
                }
            }
        }
        if emit_topic {
            let t = topic_hit.expect("checked");
            if let Some((start, end)) = hit_span(&query, t) {
                push(&mut updates, SlotUpdate { slot: Slot::Topic, value: SlotValue::Entry(t.entry_id.clone()), start, end, confidence: t.score });
            }
        }
        if let (Some(s), false) = (sub_hit, subtopic_from_number) {
            if let Some((start, end)) = hit_span(&query, s) {
                push(&mut updates, SlotUpdate { slot: Slot::Subtopic, value: SlotValue::Entry(s.entry_id.clone()), start, end, confidence: s.score });
            }
        }

        // "the chapter Complex Numbers": the level word only introduces a title
        if ctx.awaiting != Some(Slot::ExamLevel) {
            if let Some(next) = level_next {
                if updates.iter().any(|u| matches!(u.slot, Slot::Topic | Slot::Subtopic) && u.start == next) {
                    updates.retain(|u| u.slot != Slot::ExamLevel);
                }
            }
        }

        updates.sort_by_key(|u| (u.start, u.slot));
        result.slot_updates = updates;
        result.normalized = Some(normalized);
        result
    }

    fn section_by_number(&self, text: &str, bare: bool) -> Option<(String, usize, usize)> {
        let toks = raw_tokens(text);
        let chars: Vec<char> = text.chars().collect();
        let fold = |s: &str| self.index.normalizer().fold_word(&s.to_lowercase());
        let section_words: BTreeSet<String> = ["section", "abschnitt", "sec"].iter().map(|w| fold(w)).collect();
        for i in 0..toks.len().saturating_sub(1) {
            let (a, b) = (&toks[i], &toks[i + 1]);
            let dotted = chars[a.end..b.start].iter().collect::<String>() == "."
                && a.surface.chars().all(|c| c.is_ascii_digit())
                && b.surface.chars().all(|c| c.is_ascii_digit());
            if !dotted {
                continue;
            }
            let after_word = i > 0 && section_words.contains(&fold(&toks[i - 1].surface));
            if !(after_word || bare) {
                continue;
            }
            let number = format!("{}.{}", a.surface.trim_start_matches('0'), b.surface.trim_start_matches('0'));
            if let Some(e) = self.index.of_kind(EntryKind::Subtopic).find(|e| e.number.as_deref() == Some(number.as_str())) {
                let start = if after_word { toks[i - 1].start } else { a.start };
                return Some((e.id.clone(), start, b.end));
            }
        }
        None
    }

    /// Parses a replacement value typed during correction for one slot.
    pub fn extract_for_slot(&self, text: &str, slot: Slot, ctx: &ExtractContext) -> Option<SlotUpdate> {
        let ctx = ExtractContext { awaiting: Some(slot), topic: ctx.topic.clone(), history: Vec::new() };
        let r = self.extract(text, &ctx);
        r.slot_updates.into_iter().find(|u| u.slot == slot)
    }
}

fn overlaps(claimed: &[(usize, usize)], start: usize, end: usize) -> bool {
    claimed.iter().any(|&(s, e)| start < e && s < end)
}

/// Span from the first to the last current-turn token that matched the hit.
fn hit_span(query: &NormalizedText, hit: &SearchHit) -> Option<(usize, usize)> {
    let matched: BTreeSet<&str> =
        hit.matched_terms.iter().filter(|m| m.age == 0).map(|m| m.query_term.as_str()).collect();
    let toks: Vec<&Token> = query.tokens.iter().filter(|t| matched.contains(t.normal.as_str())).collect();
    Some((toks.first()?.start, toks.last()?.end))
}

fn single_letter(s: &str) -> Option<char> {
    let mut it = s.chars();
    let c = it.next()?;
    (it.next().is_none() && c.is_ascii_alphabetic()).then(|| c.to_ascii_lowercase())
}

fn paren_letter(s: &str) -> Option<char> {
    let inner = s.strip_prefix('(')?.strip_suffix(')')?;
    single_letter(inner)
}

/// "1.a", "1(a)", "5a" -> ("1", 'a').
fn split_compact(s: &str) -> Option<(String, char)> {
    let digits: String = s.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() || digits.len() > 3 {
        return None;
    }
    let rest = &s[digits.len()..];
    let letter = single_letter(rest)
        .or_else(|| rest.strip_prefix('.').and_then(single_letter))
        .or_else(|| paren_letter(rest))?;
    let num = digits.trim_start_matches('0');
    (!num.is_empty()).then(|| (num.to_string(), letter))
}

/// Writes an extraction into the dictionary. Newer values win; an update that
/// contradicts an older slot clears the older slot (a subtopic under another topic
/// replaces the topic with the subtopic's parent).
pub fn apply_updates(id: &mut InformationDictionary, result: &ExtractionResult, turn: usize, index: &CatalogIndex) {
    // a mode outranks a level named in the same message, so it is applied last
    let (modes, rest): (Vec<&SlotUpdate>, Vec<&SlotUpdate>) =
        result.slot_updates.iter().partition(|u| u.slot == Slot::ExamMode);
    for u in rest.into_iter().chain(modes) {
        let prov = Provenance::Extracted { start: u.start, end: u.end, turn };
        apply_value(id, u.slot, u.value.clone(), prov, index);
    }
}

/// Sets one slot and repairs the dictionary invariants around it.
pub fn apply_value(id: &mut InformationDictionary, slot: Slot, value: SlotValue, prov: Provenance, index: &CatalogIndex) {
    match (&slot, &value) {
        (Slot::Topic, SlotValue::Entry(topic)) => {
            if let Some(sub) = id.subtopic_id() {
                if index.get(sub).and_then(|e| e.parent.as_deref()) != Some(topic.as_str()) {
                    id.clear(Slot::Subtopic);
                }
            } else if id.value(Slot::Subtopic).is_some_and(SlotValue::is_raw) && id.topic_id() != Some(topic) {
                id.clear(Slot::Subtopic);
            }
        }
        (Slot::Topic, SlotValue::Raw(_)) => {
            if id.subtopic_id().is_some() {
                id.clear(Slot::Subtopic);
            }
        }
        (Slot::Subtopic, SlotValue::Entry(sub)) => {
            if let Some(parent) = index.get(sub).and_then(|e| e.parent.clone()) {
                if id.topic_id() != Some(parent.as_str()) {
                    id.set(Slot::Topic, SlotValue::Entry(parent), prov);
                }
            }
        }
        (Slot::ExamMode, SlotValue::Mode(m)) => match (m, id.exam_level()) {
            (ExamMode::FinalExamination, Some(Level::Section)) | (ExamMode::Quiz, Some(Level::Chapter)) => {
                id.clear(Slot::ExamLevel)
            }
            _ => {}
        },
        (Slot::ExamLevel, SlotValue::Level(l)) => match (id.exam_mode(), l) {
            (Some(ExamMode::FinalExamination), Level::Section) | (Some(ExamMode::Quiz), Level::Chapter) => {
                id.clear(Slot::ExamMode)
            }
            _ => {}
        },
        _ => {}
    }
    id.set(slot, value, prov);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nlu() -> Nlu {
        Nlu::bundled()
    }

    fn q(text: &str) -> Option<String> {
        nlu().extract_question_number(text, false).map(|(v, _, _)| v)
    }

    #[test]
    fn intents_from_showcases() {
        let n = nlu();
        let c = |t: &str| n.classify_intent(&n.normalize(t)).0;
        assert_eq!(c("Hi, I have a question regarding the certificate issue."), Intent::Organizational);
        assert_eq!(c("could someone please explain me the rule 7.2"), Intent::Contextual);
        assert_eq!(c("Hi"), Intent::Unknown);
        assert_eq!(c("Training 1 (a) in Chapter 1"), Intent::Mathematical);
    }

    #[test]
    fn question_number_writings() {
        assert_eq!(q("Exercise 5 (a)"), Some("5a".into()));
        assert_eq!(q("Exercise V a"), Some("5a".into()));
        assert_eq!(q("Exercise 5 a"), Some("5a".into()));
        assert_eq!(q("Exercise 5a"), Some("5a".into()));
        assert_eq!(q("Exercise 1.a"), Some("1a".into()));
        assert_eq!(q("Exercise 1 a"), Some("1a".into()));
        assert_eq!(q("Exercise 1(a)"), Some("1a".into()));
        assert_eq!(q("Exercise 3"), Some("3".into()));
        assert_eq!(q("I like chapter titles"), None);
        assert_eq!(q("explain me the rule 7.2"), None);
        assert_eq!(q("Chapter 4"), None);
        assert_eq!(q("I have 2 questions"), None);
        assert_eq!(q("Exercise 1 a bit later"), Some("1".into()));
    }

    #[test]
    fn question_number_span() {
        let text = "Exercise 5 (a)";
        let (_, s, e) = nlu().extract_question_number(text, false).unwrap();
        assert_eq!(crate::normalizer::char_slice(text, s, e), "5 (a)");
    }

    #[test]
    fn showcase_opening() {
        let n = nlu();
        let r = n.extract(
            "Hi, I have difficulties in Chapter I, Elementary Calculus, by solving Exercise 1 a",
            &ExtractContext::default(),
        );
        assert_eq!(r.intent, Intent::Mathematical);
        assert_eq!(r.update(Slot::Topic).unwrap().value, SlotValue::Entry("t01".into()));
        assert_eq!(r.update(Slot::ExamMode).unwrap().value, SlotValue::Mode(ExamMode::Exercise));
        assert_eq!(r.update(Slot::QuestionNumber).unwrap().value, SlotValue::Text("1a".into()));
        assert!(r.update(Slot::ExamLevel).is_none());
    }

    #[test]
    fn human_keyword_drops_slots() {
        let r = nlu().extract("human please, chapter 3", &ExtractContext::default());
        assert!(r.human_requested);
        assert!(r.slot_updates.is_empty());
    }

    #[test]
    fn subtopic_with_known_topic() {
        let n = nlu();
        let ctx = ExtractContext { topic: Some("t01".into()), ..Default::default() };
        let r = n.extract("I am working on roots and powers", &ctx);
        assert_eq!(r.update(Slot::Subtopic).unwrap().value, SlotValue::Entry("t01.s02".into()));
    }

    #[test]
    fn level_cues() {
        let n = nlu();
        let lv = |t: &str| n.extract(t, &ExtractContext::default()).update(Slot::ExamLevel).map(|u| u.value.clone());
        assert_eq!(lv("I think it is section"), Some(SlotValue::Level(Level::Section)));
        assert_eq!(lv("CHAP"), Some(SlotValue::Level(Level::Chapter)));
        assert_eq!(lv("Chapter 4"), None);
    }

    #[test]
    fn newest_topic_wins_and_clears_foreign_subtopic() {
        let index = CatalogIndex::bundled();
        let mut id = InformationDictionary::new();
        let p = Provenance::Corrected { turn: 0 };
        apply_value(&mut id, Slot::Subtopic, SlotValue::Entry("t01.s02".into()), p, &index);
        assert_eq!(id.topic_id(), Some("t01"));
        apply_value(&mut id, Slot::Topic, SlotValue::Entry("t04".into()), p, &index);
        assert_eq!(id.topic_id(), Some("t04"));
        assert!(id.subtopic_id().is_none());
        apply_value(&mut id, Slot::Subtopic, SlotValue::Entry("t01.s01".into()), p, &index);
        assert_eq!(id.topic_id(), Some("t01"));
        assert!(id.check(&index).is_ok());
    }
}
