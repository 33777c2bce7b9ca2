//! Seeded self-chat: a simulated student with a hidden goal talks to the engine.
//!
//! The student opens with a random subset of the goal's details, answers whatever
//! the engine asks, reviews the verification summary against the goal and corrects
//! at most two wrong entries. Phrasings come from a TOML file; misspellings, filler
//! answers and requests for a human are mixed in at configurable rates. Every label
//! in the output is the engine's own decision, so the generated dialogues replay
//! exactly as scenarios.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use tutorbot_core::catalog::levenshtein;
use tutorbot_core::engine::record_of;
use tutorbot_core::record::dialogue_id;
use tutorbot_core::{
    Action, CatalogEntry, DialogueRecord, Engine, EntryKind, ExamMode, Level, Slot, SlotValue, SystemAct,
};

use crate::runner::slot_delta;
use crate::scenario::{Scenario, ScriptTurn, Terminal, MAX_TURNS};

const DEFAULT_PHRASINGS: &str = include_str!("../data/phrasings.toml");

/// Corrections the simulated student makes before accepting a summary as is.
const MAX_CORRECTIONS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid phrasings: {0}")]
    Parse(String),
    #[error("phrasing list {0} is empty")]
    Empty(&'static str),
}

#[derive(Debug, Clone, Deserialize)]
pub struct Phrasings {
    pub greetings: Vec<String>,
    pub openings: Vec<String>,
    pub fragments: Fragments,
    pub answers: Answers,
    pub other: Other,
    pub rates: Rates,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Fragments {
    pub topic: Vec<String>,
    pub subtopic: Vec<String>,
    pub mode_with_qn: Vec<String>,
    pub mode: Vec<String>,
    pub qn: Vec<String>,
    pub chapter_level: Vec<String>,
    pub section_level: Vec<String>,
    pub joiners: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Answers {
    pub ask_topic: Vec<String>,
    pub ask_exam_mode: Vec<String>,
    pub ask_level_chapter: Vec<String>,
    pub ask_level_section: Vec<String>,
    pub ask_subtopic: Vec<String>,
    pub ask_question_number: Vec<String>,
    pub affirm: Vec<String>,
    pub deny: Vec<String>,
    pub letter: Vec<String>,
    pub exact_question: Vec<String>,
    pub gibberish: Vec<String>,
    pub human: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Other {
    pub org_openings: Vec<String>,
    pub org_questions: Vec<String>,
    pub context_openings: Vec<String>,
    pub context_questions: Vec<String>,
    pub unknown_openings: Vec<String>,
    pub menu_math: Vec<String>,
    pub menu_org: Vec<String>,
    pub menu_context: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Rates {
    pub math: f64,
    pub organizational: f64,
    pub contextual: f64,
    pub mention_topic: f64,
    pub mention_subtopic: f64,
    pub mention_mode: f64,
    pub mention_qn: f64,
    pub mention_level: f64,
    pub typo: f64,
    pub gibberish: f64,
    pub human: f64,
    pub letter_suffix: f64,
}

impl Phrasings {
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_PHRASINGS).expect("bundled phrasings are valid")
    }

    pub fn parse(text: &str) -> Result<Self, GeneratorError> {
        let p: Phrasings = toml::from_str(text).map_err(|e| GeneratorError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| GeneratorError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), GeneratorError> {
        let (f, a, o) = (&self.fragments, &self.answers, &self.other);
        let lists: [(&'static str, &Vec<String>); 30] = [
            ("greetings", &self.greetings),
            ("openings", &self.openings),
            ("fragments.topic", &f.topic),
            ("fragments.subtopic", &f.subtopic),
            ("fragments.mode_with_qn", &f.mode_with_qn),
            ("fragments.mode", &f.mode),
            ("fragments.qn", &f.qn),
            ("fragments.chapter_level", &f.chapter_level),
            ("fragments.section_level", &f.section_level),
            ("fragments.joiners", &f.joiners),
            ("answers.ask_topic", &a.ask_topic),
            ("answers.ask_exam_mode", &a.ask_exam_mode),
            ("answers.ask_level_chapter", &a.ask_level_chapter),
            ("answers.ask_level_section", &a.ask_level_section),
            ("answers.ask_subtopic", &a.ask_subtopic),
            ("answers.ask_question_number", &a.ask_question_number),
            ("answers.affirm", &a.affirm),
            ("answers.deny", &a.deny),
            ("answers.letter", &a.letter),
            ("answers.exact_question", &a.exact_question),
            ("answers.gibberish", &a.gibberish),
            ("answers.human", &a.human),
            ("other.org_openings", &o.org_openings),
            ("other.org_questions", &o.org_questions),
            ("other.context_openings", &o.context_openings),
            ("other.context_questions", &o.context_questions),
            ("other.unknown_openings", &o.unknown_openings),
            ("other.menu_math", &o.menu_math),
            ("other.menu_org", &o.menu_org),
            ("other.menu_context", &o.menu_context),
        ];
        match lists.iter().find(|(_, v)| v.is_empty()) {
            Some((name, _)) => Err(GeneratorError::Empty(name)),
            None => Ok(()),
        }
    }
}

/// Generated dialogues in both forms: replayable scripts and engine records.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub scenarios: Vec<Scenario>,
    pub records: Vec<DialogueRecord>,
}

impl Corpus {
    pub fn mean_turns(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.turns.len()).sum::<usize>() as f64 / self.records.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Track {
    Math,
    Organizational,
    Contextual,
}

#[derive(Debug, Clone)]
struct Goal {
    track: Track,
    via_menu: bool,
    topic: CatalogEntry,
    subtopic: CatalogEntry,
    mode: ExamMode,
    level: Level,
    number: u32,
    letter: Option<char>,
}

impl Goal {
    fn qn(&self) -> String {
        match self.letter {
            Some(l) => format!("{}{l}", self.number),
            None => self.number.to_string(),
        }
    }

    /// Whether a dictionary value is acceptable for this goal; `None` means absent.
    fn accepts(&self, slot: Slot, value: Option<&SlotValue>) -> bool {
        let needs_section = self.mode == ExamMode::Quiz
            || (self.level == Level::Section && matches!(self.mode, ExamMode::Training | ExamMode::Exercise));
        match (slot, value) {
            (Slot::Topic, Some(SlotValue::Entry(id))) => *id == self.topic.id,
            (Slot::Subtopic, Some(SlotValue::Entry(id))) => *id == self.subtopic.id,
            (Slot::Subtopic, None) => !needs_section,
            (Slot::ExamMode, Some(SlotValue::Mode(m))) => *m == self.mode,
            (Slot::ExamLevel, Some(SlotValue::Level(l))) => match self.mode {
                ExamMode::Quiz => *l == Level::Section,
                ExamMode::FinalExamination => *l == Level::Chapter,
                _ => *l == self.level,
            },
            (Slot::ExamLevel, None) => matches!(self.mode, ExamMode::Quiz | ExamMode::FinalExamination),
            (Slot::QuestionNumber, Some(SlotValue::Text(q))) => *q == self.qn(),
            (Slot::ExactQuestion, _) => true,
            _ => false,
        }
    }
}

struct Simulator<'a> {
    p: &'a Phrasings,
    rng: ChaCha8Rng,
    topics: Vec<CatalogEntry>,
    subtopics: Vec<CatalogEntry>,
    modes: Vec<CatalogEntry>,
}

fn fill(template: &str, key: &str, value: &str) -> String {
    template.replace(&format!("{{{key}}}"), value)
}

fn roman(n: u32) -> String {
    const TABLE: [(u32, &str); 6] = [(10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I"), (0, "")];
    let mut n = n;
    let mut out = String::new();
    for (v, s) in TABLE.iter().take(5) {
        while n >= *v {
            out.push_str(s);
            n -= v;
        }
    }
    out
}

/// `YYYY-MM-DDTHH:MM:SSZ` for seconds since 2026-01-01.
fn timestamp(secs: u64) -> String {
    let days = secs / 86_400 + 20_454; // 2026-01-01 as days since 1970-01-01
    let rem = secs % 86_400;
    // civil-from-days, proleptic Gregorian
    let z = days as i64 + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z", rem / 3600, rem % 3600 / 60, rem % 60)
}

impl<'a> Simulator<'a> {
    fn new(p: &'a Phrasings, engine: &Engine, seed: u64) -> Self {
        let index = engine.nlu().index();
        let of = |k| index.of_kind(k).cloned().collect::<Vec<_>>();
        Simulator {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
            topics: of(EntryKind::Topic),
            subtopics: of(EntryKind::Subtopic),
            modes: of(EntryKind::ExamMode),
        }
    }

    fn pick<'b>(&mut self, v: &'b [String]) -> &'b str {
        v.choose(&mut self.rng).expect("phrasing lists are non-empty")
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p.clamp(0.0, 1.0))
    }

    fn goal(&mut self) -> Goal {
        let r = self.p.rates.clone();
        let x: f64 = self.rng.gen();
        let track = if x < r.math {
            Track::Math
        } else if x < r.math + r.organizational {
            Track::Organizational
        } else if x < r.math + r.organizational + r.contextual {
            Track::Contextual
        } else {
            *[Track::Math, Track::Organizational, Track::Contextual].choose(&mut self.rng).unwrap()
        };
        let via_menu = x >= r.math + r.organizational + r.contextual;
        let subtopic = self.subtopics.choose(&mut self.rng).expect("catalog has sub-topics").clone();
        let topic = self
            .topics
            .iter()
            .find(|t| Some(&t.id) == subtopic.parent.as_ref())
            .expect("sub-topic parent exists")
            .clone();
        let mode = *ExamMode::ALL.choose(&mut self.rng).unwrap();
        let level = if self.chance(0.5) { Level::Chapter } else { Level::Section };
        let number = self.rng.gen_range(1..=9);
        let letter = self.chance(r.letter_suffix).then(|| *['a', 'b', 'c', 'd'].choose(&mut self.rng).unwrap());
        Goal { track, via_menu, topic, subtopic, mode, level, number, letter }
    }

    /// Replaces one word of at least six letters with a variant at edit distance
    /// one or two; the first letter is kept.
    fn misspell(&mut self, text: &str) -> String {
        let words: Vec<&str> = text.split(' ').collect();
        let long: Vec<usize> =
            (0..words.len()).filter(|&i| words[i].chars().filter(|c| c.is_alphabetic()).count() >= 6).collect();
        let Some(&wi) = long.choose(&mut self.rng) else { return text.to_string() };
        let word: Vec<char> = words[wi].chars().filter(|c| c.is_alphabetic()).collect();
        let original: String = word.iter().collect();
        let k = self.rng.gen_range(1..=2);
        for _ in 0..20 {
            let mut w = word.clone();
            for _ in 0..k {
                let pos = self.rng.gen_range(1..w.len());
                let c = (b'a' + self.rng.gen_range(0..26u8)) as char;
                match self.rng.gen_range(0..3) {
                    0 => w[pos] = c,
                    1 => w.insert(pos, c),
                    _ => {
                        w.remove(pos);
                    }
                }
            }
            let typo: String = w.iter().collect();
            if levenshtein(&original.to_lowercase(), &typo.to_lowercase()) == k {
                let trailing: String = words[wi].chars().filter(|c| !c.is_alphabetic()).collect();
                let mut out: Vec<String> = words.iter().map(|s| s.to_string()).collect();
                out[wi] = typo + &trailing;
                return out.join(" ");
            }
        }
        text.to_string()
    }

    fn maybe_typo(&mut self, text: String) -> String {
        if self.chance(self.p.rates.typo) {
            self.misspell(&text)
        } else {
            text
        }
    }

    fn render_topic(&mut self, g: &Goal) -> String {
        let t = self.pick(&self.p.fragments.topic).to_string();
        let number = g.topic.number.clone().unwrap_or_default();
        let n: u32 = number.parse().unwrap_or(1);
        let title = self.title_or_synonym(&g.topic);
        let s = fill(&fill(&fill(&t, "number", &number), "roman", &roman(n)), "title", &title);
        self.maybe_typo(s)
    }

    fn render_subtopic(&mut self, g: &Goal) -> String {
        let t = self.pick(&self.p.fragments.subtopic).to_string();
        let title = self.title_or_synonym(&g.subtopic);
        let s = fill(&fill(&t, "number", g.subtopic.number.as_deref().unwrap_or("")), "title", &title);
        self.maybe_typo(s)
    }

    fn title_or_synonym(&mut self, e: &CatalogEntry) -> String {
        if !e.synonyms.is_empty() && self.chance(0.25) {
            e.synonyms.choose(&mut self.rng).unwrap().clone()
        } else {
            e.title.clone()
        }
    }

    fn render_mode(&mut self, g: &Goal) -> String {
        let entry = self.modes.iter().find(|m| m.exam_mode() == Some(g.mode)).cloned();
        let name = match entry {
            Some(e) => self.title_or_synonym(&e),
            None => g.mode.as_str().replace('_', " "),
        };
        let name = if self.chance(0.5) { name.to_lowercase() } else { name };
        self.maybe_typo(name)
    }

    fn render_qn(&mut self, g: &Goal) -> String {
        let n = g.number;
        match g.letter {
            None => n.to_string(),
            Some(l) => match self.rng.gen_range(0..5) {
                0 => format!("{n}{l}"),
                1 => format!("{n} ({l})"),
                2 => format!("{n}.{l}"),
                3 => format!("{n}({l})"),
                _ => format!("{n} {l}"),
            },
        }
    }

    fn level_phrase(&mut self, g: &Goal) -> String {
        match g.level {
            Level::Chapter => self.pick(&self.p.fragments.chapter_level).to_string(),
            Level::Section => self.pick(&self.p.fragments.section_level).to_string(),
        }
    }

    fn opening(&mut self, g: &Goal) -> String {
        match (g.track, g.via_menu) {
            (_, true) => self.pick(&self.p.other.unknown_openings).to_string(),
            (Track::Organizational, _) => self.pick(&self.p.other.org_openings).to_string(),
            (Track::Contextual, _) => {
                let rule = format!("{}.{}", self.rng.gen_range(1..=13), self.rng.gen_range(1..=9));
                fill(self.pick(&self.p.other.context_openings), "rule", &rule)
            }
            (Track::Math, _) => self.math_opening(g),
        }
    }

    fn math_opening(&mut self, g: &Goal) -> String {
        let r = self.p.rates.clone();
        let mut parts = Vec::new();
        let (mode, qn) = (self.chance(r.mention_mode), self.chance(r.mention_qn));
        match (mode, qn) {
            (true, true) => {
                let (m, q) = (self.render_mode(g), self.render_qn(g));
                let t = self.pick(&self.p.fragments.mode_with_qn).to_string();
                parts.push(fill(&fill(&t, "mode", &m), "qn", &q));
            }
            (true, false) => {
                let m = self.render_mode(g);
                parts.push(fill(self.pick(&self.p.fragments.mode), "mode", &m));
            }
            (false, true) => {
                let q = self.render_qn(g);
                parts.push(fill(self.pick(&self.p.fragments.qn), "qn", &q));
            }
            (false, false) => {}
        }
        if self.chance(r.mention_subtopic) {
            parts.push(self.render_subtopic(g));
        } else if self.chance(r.mention_topic) {
            parts.push(self.render_topic(g));
        }
        let mut text = String::new();
        for (i, part) in parts.iter().enumerate() {
            if i > 0 {
                text.push_str(self.pick(&self.p.fragments.joiners));
            }
            text.push_str(part);
        }
        if parts.is_empty() {
            text = self.pick(&self.p.other.menu_math).to_string();
        }
        if self.chance(r.mention_level) {
            text = format!("{text} {}", self.level_phrase(g));
        }
        let template = self.pick(&self.p.openings).to_string();
        let greeting = self.pick(&self.p.greetings).to_string();
        fill(&fill(&template, "greeting", &greeting), "parts", &text)
    }

    /// An answer that supplies the goal's value for one slot.
    fn answer_for(&mut self, slot: Slot, g: &Goal) -> String {
        let a = &self.p.answers;
        match slot {
            Slot::Topic => {
                let v = self.render_topic(g);
                fill(self.pick(&a.ask_topic), "topic", &v)
            }
            Slot::Subtopic => {
                let v = self.render_subtopic(g);
                fill(self.pick(&a.ask_subtopic), "subtopic", &v)
            }
            Slot::ExamMode => {
                let v = self.render_mode(g);
                fill(self.pick(&a.ask_exam_mode), "mode", &v)
            }
            Slot::ExamLevel => match g.level {
                Level::Chapter => self.pick(&a.ask_level_chapter).to_string(),
                Level::Section => self.pick(&a.ask_level_section).to_string(),
            },
            Slot::QuestionNumber => {
                let v = self.render_qn(g);
                fill(self.pick(&a.ask_question_number), "qn", &v)
            }
            Slot::ExactQuestion => self.pick(&a.exact_question).to_string(),
        }
    }

    fn menu_answer(&mut self, g: &Goal) -> String {
        let o = &self.p.other;
        match g.track {
            Track::Math => self.pick(&o.menu_math),
            Track::Organizational => self.pick(&o.menu_org),
            Track::Contextual => self.pick(&o.menu_context),
        }
        .to_string()
    }
}

struct Review {
    corrections: usize,
    pending: Option<Slot>,
}

fn reply(sim: &mut Simulator, g: &Goal, act: &SystemAct, session: &tutorbot_core::SessionState, rv: &mut Review) -> String {
    let gibberish = sim.p.rates.gibberish;
    let a = sim.p.answers.clone();
    match act.action {
        action if action.is_ask() => {
            if sim.chance(gibberish) {
                return sim.pick(&a.gibberish).to_string();
            }
            let slot = action.awaited_slot().expect("ask actions await a slot");
            sim.answer_for(slot, g)
        }
        Action::UnknownIntentMenu => {
            if sim.chance(gibberish) {
                sim.pick(&a.gibberish).to_string()
            } else {
                sim.menu_answer(g)
            }
        }
        Action::FinalRequest => {
            let wrong = session
                .letters
                .iter()
                .find(|(_, slot)| !g.accepts(*slot, session.id.value(*slot)))
                .map(|(_, slot)| *slot);
            match wrong {
                Some(slot) if rv.corrections < MAX_CORRECTIONS => {
                    rv.corrections += 1;
                    rv.pending = Some(slot);
                    sim.pick(&a.deny).to_string()
                }
                _ => sim.pick(&a.affirm).to_string(),
            }
        }
        Action::VerifyRequest => {
            let slot = rv.pending.unwrap_or(Slot::Topic);
            let letter = session.letters.iter().find(|(_, s)| *s == slot).map(|(l, _)| *l).unwrap_or('a');
            fill(sim.pick(&a.letter), "letter", &letter.to_string())
        }
        Action::CorrectRequest => {
            let slot = rv.pending.take().unwrap_or(Slot::Topic);
            sim.answer_for(slot, g)
        }
        Action::ExactQuestion => sim.pick(&a.exact_question).to_string(),
        Action::OrgAck => sim.pick(&sim.p.other.org_questions).to_string(),
        Action::ContextAck => sim.pick(&sim.p.other.context_questions).to_string(),
        _ => sim.pick(&a.gibberish).to_string(),
    }
}

/// Generates `n` dialogues. The same seed, phrasings and engine give the same corpus.
pub fn generate_corpus(n: usize, seed: u64, phrasings: &Phrasings, engine: &Engine) -> Corpus {
    let mut sim = Simulator::new(phrasings, engine, seed);
    let mut corpus = Corpus::default();
    for i in 0..n {
        let id = dialogue_id(i as u64 + 1);
        let goal = sim.goal();
        let mut session = engine.new_session(id.clone());
        let mut review = Review { corrections: 0, pending: None };
        let mut script = Vec::new();
        let mut records = Vec::new();
        let mut message = sim.opening(&goal);
        while script.len() < MAX_TURNS {
            if sim.chance(phrasings.rates.human) {
                message = sim.pick(&phrasings.answers.human).to_string();
            }
            let before = session.id.clone();
            let turn = engine.step(&mut session, &message).expect("open sessions accept messages");
            script.push(ScriptTurn {
                user: message.clone(),
                expect: turn.act.action.as_str().to_string(),
                slots: Some(slot_delta(&before, &session.id)),
            });
            records.push(turn.record);
            if session.is_closed() {
                break;
            }
            message = reply(&mut sim, &goal, &turn.act, &session, &mut review);
        }
        let terminal = Terminal {
            outcome: Some(if session.is_closed() { "handover" } else { "open" }.into()),
            reason: session.ticket.as_ref().map(|t| t.reason.as_str().to_string()),
            slots: None,
        };
        let started_at = timestamp(i as u64 * 1_020);
        corpus.records.push(record_of(&session, records, Some(started_at)));
        corpus.scenarios.push(Scenario {
            id,
            description: String::new(),
            tags: vec!["generated".into()],
            turns: script,
            terminal: Some(terminal),
        });
    }
    corpus
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roman_numerals() {
        let got: Vec<String> = [1, 4, 5, 9, 12, 13].into_iter().map(roman).collect();
        assert_eq!(got, ["I", "IV", "V", "IX", "XII", "XIII"]);
    }

    #[test]
    fn timestamps_cross_month_boundaries() {
        assert_eq!(timestamp(0), "2026-01-01T00:00:00Z");
        assert_eq!(timestamp(31 * 86_400 + 3_661), "2026-02-01T01:01:01Z");
        assert_eq!(timestamp(365 * 86_400), "2027-01-01T00:00:00Z");
    }

    #[test]
    fn misspellings_stay_within_two_edits() {
        let p = Phrasings::bundled();
        let engine = Engine::bundled();
        let mut sim = Simulator::new(&p, &engine, 3);
        for _ in 0..200 {
            let out = sim.misspell("Differential Calculus");
            let d = levenshtein(&out.to_lowercase(), "differential calculus");
            assert!((1..=2).contains(&d), "{out}");
            assert!(out.starts_with('D') && out.contains(" C") || out.starts_with("Differential "), "{out}");
        }
    }
}
