//! Dialogue state space, validity rules, ordered transition rules and the generated
//! state -> next-action table.
//!
//! A state is a vector of boolean flags saying which pieces of information are known.
//! Validity (rules R1..R5):
//!
//! * R1: topic is free.
//! * R2: at most one of training / exercise / quiz / final examination.
//! * R3: at most one of chapter level / section level.
//! * R4: a level flag only together with training or exercise.
//! * R5: any topic / sub-topic combination.
//!
//! Transition rules are tried in order and the first that fires decides the action:
//! T1 ask topic, T2 ask exam mode, T3 ask level, T4 ask sub-topic, T5 ask question number.
//! The legacy design adds a sub-sub-topic flag (free, like R5) and a rule T6 after T4.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{ExamMode, Level};
use crate::dictionary::{InformationDictionary, Slot, SlotValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Topic,
    SubTopic,
    Training,
    Exercise,
    ChapterLevel,
    SectionLevel,
    Quiz,
    FinalExamination,
    QuestionNumber,
    SubSubTopic,
}

impl Flag {
    /// The nine flags of the current design, in vector order.
    pub const BASE: [Flag; 9] = [
        Flag::Topic,
        Flag::SubTopic,
        Flag::Training,
        Flag::Exercise,
        Flag::ChapterLevel,
        Flag::SectionLevel,
        Flag::Quiz,
        Flag::FinalExamination,
        Flag::QuestionNumber,
    ];

    pub fn short(self) -> &'static str {
        match self {
            Flag::Topic => "T",
            Flag::SubTopic => "ST",
            Flag::Training => "TR",
            Flag::Exercise => "E",
            Flag::ChapterLevel => "CL",
            Flag::SectionLevel => "SL",
            Flag::Quiz => "Q",
            Flag::FinalExamination => "FE",
            Flag::QuestionNumber => "QNR",
            Flag::SubSubTopic => "SST",
        }
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }

    pub fn of_mode(mode: ExamMode) -> Flag {
        match mode {
            ExamMode::Training => Flag::Training,
            ExamMode::Exercise => Flag::Exercise,
            ExamMode::Quiz => Flag::Quiz,
            ExamMode::FinalExamination => Flag::FinalExamination,
        }
    }
}

const MODE_FLAGS: [Flag; 4] = [Flag::Training, Flag::Exercise, Flag::Quiz, Flag::FinalExamination];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateVector(u16);

impl StateVector {
    pub const EMPTY: StateVector = StateVector(0);

    pub fn from_flags(flags: &[Flag]) -> Self {
        StateVector(flags.iter().fold(0, |acc, f| acc | f.bit()))
    }

    /// Bits in `Flag` order: bit 0 topic ... bit 8 question number, bit 9 sub-sub-topic.
    pub fn from_bits(bits: u16) -> Self {
        StateVector(bits & 0x3ff)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn has(self, f: Flag) -> bool {
        self.0 & f.bit() != 0
    }

    pub fn with(self, f: Flag) -> Self {
        StateVector(self.0 | f.bit())
    }

    pub fn without(self, f: Flag) -> Self {
        StateVector(self.0 & !f.bit())
    }

    pub fn flags(self) -> Vec<Flag> {
        Flag::BASE.iter().copied().chain([Flag::SubSubTopic]).filter(|f| self.has(*f)).collect()
    }

    pub fn mode(self) -> Option<Flag> {
        MODE_FLAGS.into_iter().find(|f| self.has(*f))
    }

    fn count(self, flags: &[Flag]) -> usize {
        flags.iter().filter(|f| self.has(**f)).count()
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.flags().into_iter().map(Flag::short).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// System actions: five questions from the state table plus the meta-actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    AskTopic,
    AskExamMode,
    AskLevel,
    AskSubtopic,
    AskQuestionNumber,
    FinalRequest,
    VerifyRequest,
    CorrectRequest,
    ExactQuestion,
    HumanHandover,
    UnknownIntentMenu,
    OrgAck,
    ContextAck,
}

impl Action {
    pub const ALL: [Action; 13] = [
        Action::AskTopic,
        Action::AskExamMode,
        Action::AskLevel,
        Action::AskSubtopic,
        Action::AskQuestionNumber,
        Action::FinalRequest,
        Action::VerifyRequest,
        Action::CorrectRequest,
        Action::ExactQuestion,
        Action::HumanHandover,
        Action::UnknownIntentMenu,
        Action::OrgAck,
        Action::ContextAck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::AskTopic => "ask_topic",
            Action::AskExamMode => "ask_exam_mode",
            Action::AskLevel => "ask_level",
            Action::AskSubtopic => "ask_subtopic",
            Action::AskQuestionNumber => "ask_question_number",
            Action::FinalRequest => "final_request",
            Action::VerifyRequest => "verify_request",
            Action::CorrectRequest => "correct_request",
            Action::ExactQuestion => "exact_question",
            Action::HumanHandover => "human_handover",
            Action::UnknownIntentMenu => "unknown_intent_menu",
            Action::OrgAck => "org_ack",
            Action::ContextAck => "context_ack",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.as_str() == s)
    }

    pub fn is_ask(self) -> bool {
        matches!(
            self,
            Action::AskTopic | Action::AskExamMode | Action::AskLevel | Action::AskSubtopic | Action::AskQuestionNumber
        )
    }

    /// The slot an ask-action is waiting for.
    pub fn awaited_slot(self) -> Option<Slot> {
        match self {
            Action::AskTopic => Some(Slot::Topic),
            Action::AskExamMode => Some(Slot::ExamMode),
            Action::AskLevel => Some(Slot::ExamLevel),
            Action::AskSubtopic => Some(Slot::Subtopic),
            Action::AskQuestionNumber => Some(Slot::QuestionNumber),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    T1,
    T2,
    T3,
    T4,
    /// Legacy only: sub-sub-topic question.
    T6,
    T5,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::T1 => "T1",
            Rule::T2 => "T2",
            Rule::T3 => "T3",
            Rule::T4 => "T4",
            Rule::T6 => "T6",
            Rule::T5 => "T5",
        }
    }

    pub fn action(self) -> Action {
        match self {
            Rule::T1 => Action::AskTopic,
            Rule::T2 => Action::AskExamMode,
            Rule::T3 => Action::AskLevel,
            Rule::T4 | Rule::T6 => Action::AskSubtopic,
            Rule::T5 => Action::AskQuestionNumber,
        }
    }
}

/// Which level a mode's tasks live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelPolicy {
    /// The student is asked (training, exercise).
    Either,
    ChapterOnly,
    SectionOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub name: String,
    pub training: LevelPolicy,
    pub exercise: LevelPolicy,
    pub quiz: LevelPolicy,
    pub final_examination: LevelPolicy,
    /// Topics carry a third hierarchy level below sections.
    pub sub_sub_topics: bool,
}

impl DesignConfig {
    /// The platform as it is today.
    pub fn current() -> Self {
        DesignConfig {
            name: "current".into(),
            training: LevelPolicy::Either,
            exercise: LevelPolicy::Either,
            quiz: LevelPolicy::SectionOnly,
            final_examination: LevelPolicy::ChapterOnly,
            sub_sub_topics: false,
        }
    }

    /// The earlier platform whose first topic had sub-sub-topics.
    pub fn legacy() -> Self {
        DesignConfig { name: "legacy".into(), sub_sub_topics: true, ..Self::current() }
    }

    /// Every mode lives on the chapter level.
    pub fn chapter_only() -> Self {
        DesignConfig {
            name: "chapter_only".into(),
            training: LevelPolicy::ChapterOnly,
            exercise: LevelPolicy::ChapterOnly,
            quiz: LevelPolicy::ChapterOnly,
            final_examination: LevelPolicy::ChapterOnly,
            sub_sub_topics: false,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "current" => Some(Self::current()),
            "legacy" => Some(Self::legacy()),
            "chapter_only" => Some(Self::chapter_only()),
            _ => None,
        }
    }

    pub fn policy(&self, mode: Flag) -> Option<LevelPolicy> {
        match mode {
            Flag::Training => Some(self.training),
            Flag::Exercise => Some(self.exercise),
            Flag::Quiz => Some(self.quiz),
            Flag::FinalExamination => Some(self.final_examination),
            _ => None,
        }
    }

    /// Quiz and final examination states never carry a level flag (R4), so the
    /// student cannot be asked about their level.
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("quiz", self.quiz), ("final_examination", self.final_examination)] {
            if p == LevelPolicy::Either {
                return Err(format!("{name} cannot ask for a level: level flags require training or exercise"));
            }
        }
        Ok(())
    }
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self::current()
    }
}

/// Validity and transition rules for one design.
#[derive(Debug, Clone)]
pub struct RuleSet {
    design: DesignConfig,
}

impl RuleSet {
    pub fn new(design: DesignConfig) -> Result<Self, String> {
        design.validate()?;
        Ok(RuleSet { design })
    }

    pub fn design(&self) -> &DesignConfig {
        &self.design
    }

    /// Number of flags in this design's state vector.
    pub fn width(&self) -> u32 {
        if self.design.sub_sub_topics {
            10
        } else {
            9
        }
    }

    pub fn is_valid(&self, s: StateVector) -> bool {
        if !self.design.sub_sub_topics && s.has(Flag::SubSubTopic) {
            return false;
        }
        let r2 = s.count(&MODE_FLAGS) <= 1;
        let r3 = s.count(&[Flag::ChapterLevel, Flag::SectionLevel]) <= 1;
        let level = s.has(Flag::ChapterLevel) || s.has(Flag::SectionLevel);
        let r4 = !level || s.has(Flag::Training) || s.has(Flag::Exercise);
        r2 && r3 && r4
    }

    /// True if the state's mode works on sections (so a section must be named).
    fn section_mode(&self, s: StateVector) -> bool {
        match s.mode().and_then(|m| self.design.policy(m)) {
            Some(LevelPolicy::SectionOnly) => true,
            Some(LevelPolicy::Either) => s.has(Flag::SectionLevel),
            _ => false,
        }
    }

    /// The first rule that fires, if any.
    pub fn firing_rule(&self, s: StateVector) -> Option<Rule> {
        if !s.has(Flag::Topic) {
            return Some(Rule::T1);
        }
        let Some(mode) = s.mode() else { return Some(Rule::T2) };
        let level = s.has(Flag::ChapterLevel) || s.has(Flag::SectionLevel);
        if self.design.policy(mode) == Some(LevelPolicy::Either) && !level {
            return Some(Rule::T3);
        }
        if !s.has(Flag::SubTopic) && self.section_mode(s) {
            return Some(Rule::T4);
        }
        if self.design.sub_sub_topics && s.has(Flag::SubTopic) && !s.has(Flag::SubSubTopic) && self.section_mode(s) {
            return Some(Rule::T6);
        }
        if !s.has(Flag::QuestionNumber) {
            return Some(Rule::T5);
        }
        None
    }

    pub fn next_action(&self, s: StateVector) -> Option<Action> {
        debug_assert!(self.is_valid(s), "next_action on invalid state {s}");
        self.firing_rule(s).map(Rule::action)
    }

    pub fn all_states(&self) -> impl Iterator<Item = StateVector> + '_ {
        (0u16..(1 << self.width())).map(StateVector::from_bits).filter(|s| self.is_valid(*s))
    }

    pub fn enumerate(&self) -> TransitionTable {
        let rows: Vec<TransitionRow> = self
            .all_states()
            .filter_map(|s| self.firing_rule(s).map(|rule| TransitionRow { state: s, rule, action: rule.action() }))
            .collect();
        let fingerprint = fingerprint(&rows, self.width());
        TransitionTable { design: self.design.name.clone(), width: self.width(), rows, fingerprint }
    }
}

static CURRENT: std::sync::OnceLock<RuleSet> = std::sync::OnceLock::new();

fn current() -> &'static RuleSet {
    CURRENT.get_or_init(|| RuleSet::new(DesignConfig::current()).expect("current design is consistent"))
}

/// Validity under the current design.
pub fn is_valid(s: StateVector) -> bool {
    current().is_valid(s)
}

/// Next question under the current design; `None` when no rule fires.
pub fn next_action(s: StateVector) -> Option<Action> {
    current().next_action(s)
}

pub fn enumerate_transitions(design: &DesignConfig) -> Result<TransitionTable, String> {
    Ok(RuleSet::new(design.clone())?.enumerate())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub state: StateVector,
    pub rule: Rule,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub design: String,
    pub width: u32,
    pub rows: Vec<TransitionRow>,
    /// FNV-1a over the rows; stable across runs and platforms.
    pub fingerprint: String,
}

impl TransitionTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count_by_rule(&self, rule: Rule) -> usize {
        self.rows.iter().filter(|r| r.rule == rule).count()
    }

    /// Tab-separated table: one 0/1 column per flag, then rule and action.
    pub fn to_tsv(&self) -> String {
        let flags: Vec<Flag> = Flag::BASE.iter().copied().chain((self.width == 10).then_some(Flag::SubSubTopic)).collect();
        let mut out = String::new();
        for f in &flags {
            out.push_str(f.short());
            out.push('\t');
        }
        out.push_str("rule\taction\n");
        for r in &self.rows {
            for f in &flags {
                out.push(if r.state.has(*f) { '1' } else { '0' });
                out.push('\t');
            }
            out.push_str(r.rule.as_str());
            out.push('\t');
            out.push_str(r.action.as_str());
            out.push('\n');
        }
        out
    }
}

fn fingerprint(rows: &[TransitionRow], width: u32) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    feed(width as u8);
    for r in rows {
        for b in r.state.bits().to_le_bytes() {
            feed(b);
        }
        for b in r.action.as_str().bytes() {
            feed(b);
        }
    }
    format!("{h:016x}")
}

/// Projects the dictionary onto the state vector. Level is projected only when the
/// mode is training or exercise. Values typed verbatim after repeated failures map to
/// the branch that needs no further structural questions: a raw mode counts as final
/// examination and a raw level as chapter level.
pub fn state_of(id: &InformationDictionary) -> StateVector {
    let mut s = StateVector::EMPTY;
    if id.has(Slot::Topic) {
        s = s.with(Flag::Topic);
    }
    if id.has(Slot::Subtopic) {
        s = s.with(Flag::SubTopic);
    }
    let mode = match id.value(Slot::ExamMode) {
        Some(SlotValue::Mode(m)) => Some(Flag::of_mode(*m)),
        Some(_) => Some(Flag::FinalExamination),
        None => None,
    };
    if let Some(m) = mode {
        s = s.with(m);
        if matches!(m, Flag::Training | Flag::Exercise) {
            match id.value(Slot::ExamLevel) {
                Some(SlotValue::Level(Level::Section)) => s = s.with(Flag::SectionLevel),
                Some(_) => s = s.with(Flag::ChapterLevel),
                None => {}
            }
        }
    }
    if id.has(Slot::QuestionNumber) {
        s = s.with(Flag::QuestionNumber);
    }
    s
}

/// The six ways a state counts as complete:
/// 1 T+FE+QNR, 2 T+ST+Q+QNR, 3 T+TR+CL+QNR, 4 T+E+CL+QNR, 5 T+ST+TR+SL+QNR, 6 T+ST+E+SL+QNR.
pub fn completeness_case(s: StateVector) -> Option<u8> {
    use Flag::*;
    if !(s.has(Topic) && s.has(QuestionNumber)) {
        return None;
    }
    let st = s.has(SubTopic);
    let (cl, sl) = (s.has(ChapterLevel), s.has(SectionLevel));
    match s.mode()? {
        FinalExamination => Some(1),
        Quiz if st => Some(2),
        Training if cl => Some(3),
        Exercise if cl => Some(4),
        Training if sl && st => Some(5),
        Exercise if sl && st => Some(6),
        _ => None,
    }
}

/// Summary of a design's table for audit output.
#[derive(Debug, Clone, Serialize)]
pub struct Audit {
    pub design: String,
    pub valid_states: usize,
    pub complete_states: usize,
    pub rows: usize,
    pub rows_by_rule: Vec<(String, usize)>,
    pub fingerprint: String,
}

pub fn audit(design: &DesignConfig) -> Result<Audit, String> {
    let rules = RuleSet::new(design.clone())?;
    let table = rules.enumerate();
    let valid = rules.all_states().count();
    let by_rule = [Rule::T1, Rule::T2, Rule::T3, Rule::T4, Rule::T6, Rule::T5]
        .into_iter()
        .map(|r| (r.as_str().to_string(), table.count_by_rule(r)))
        .filter(|(_, n)| *n > 0)
        .collect();
    Ok(Audit {
        design: design.name.clone(),
        valid_states: valid,
        complete_states: valid - table.len(),
        rows: table.len(),
        rows_by_rule: by_rule,
        fingerprint: table.fingerprint,
    })
}
