//! Meta-policy: intent routing, slot collection with re-ask fallback, the
//! verification and correction loop, and hand-over to a human tutor.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialogue_state::{completeness_case, state_of, Action, RuleSet};
use crate::dictionary::{InformationDictionary, Provenance, Slot, SlotValue};
use crate::error::ConfigError;
use crate::nlu::{apply_updates, apply_value, ExtractContext, ExtractionResult, Intent, Nlu};
use crate::responder::{RenderExtras, TemplateStore, VerificationItem};

const DEFAULT_POLICY: &str = include_str!("../data/policy.toml");

/// Number of ask-actions a complete collection needs at most.
pub const ASK_ACTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub max_attempts: u32,
    pub history_turns: usize,
    pub affirmations: BTreeSet<String>,
    pub negations: BTreeSet<String>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_POLICY).expect("bundled policy config is valid")
    }
}

impl PolicyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: PolicyConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { what: "policy", message: e.to_string() })?;
        if cfg.max_attempts == 0 {
            return Err(ConfigError::Invalid("max_attempts must be positive".into()));
        }
        cfg.affirmations = cfg.affirmations.iter().map(|s| s.to_lowercase()).collect();
        cfg.negations = cfg.negations.iter().map(|s| s.to_lowercase()).collect();
        if let Some(w) = cfg.affirmations.intersection(&cfg.negations).next() {
            return Err(ConfigError::Invalid(format!("{w:?} is both an affirmation and a negation")));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Upper bound on questions asked while collecting: every ask-action plus the
    /// re-asks of all six slots.
    pub fn max_collect_asks(&self) -> usize {
        ASK_ACTIONS + self.max_attempts as usize * Slot::ALL.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Collecting,
    IntentMenu,
    Verifying,
    Correcting { letter: Option<char> },
    AwaitingExactQuestion,
    HandedOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverReason {
    /// Collection and verification finished, summary given.
    Completed,
    HumanRequested,
    UnclassifiedIntent,
    VerificationFailed,
    TurnLimit,
}

impl HandoverReason {
    pub const ALL: [HandoverReason; 5] = [
        HandoverReason::Completed,
        HandoverReason::HumanRequested,
        HandoverReason::UnclassifiedIntent,
        HandoverReason::VerificationFailed,
        HandoverReason::TurnLimit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HandoverReason::Completed => "completed",
            HandoverReason::HumanRequested => "human_requested",
            HandoverReason::UnclassifiedIntent => "unclassified_intent",
            HandoverReason::VerificationFailed => "verification_failed",
            HandoverReason::TurnLimit => "turn_limit",
        }
    }

    pub fn parse(s: &str) -> Option<HandoverReason> {
        HandoverReason::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoverTicket {
    /// Session id; the transcript is stored under it.
    pub transcript_ref: String,
    pub intent: Intent,
    pub reason: HandoverReason,
    pub slots: InformationDictionary,
    /// The student's summary of their question, when one was given.
    pub summary: Option<String>,
    /// True when the dictionary was not complete and confirmed.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub id: InformationDictionary,
    pub phase: Phase,
    /// Decided intent; `None` until the opening message has been classified.
    pub intent: Option<Intent>,
    pub fallback_counts: BTreeMap<Slot, u32>,
    pub intent_attempts: u32,
    pub verification_failures: u32,
    pub asks: usize,
    pub last_system_action: Option<Action>,
    /// Number of user messages processed.
    pub turn_index: usize,
    /// Earlier user messages considered by the fuzzy search, oldest first.
    pub history: Vec<String>,
    /// Letters of the last verification summary.
    pub letters: Vec<(char, Slot)>,
    pub ticket: Option<HandoverTicket>,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            id: InformationDictionary::new(),
            phase: Phase::Collecting,
            intent: None,
            fallback_counts: BTreeMap::new(),
            intent_attempts: 0,
            verification_failures: 0,
            asks: 0,
            last_system_action: None,
            turn_index: 0,
            history: Vec::new(),
            letters: Vec::new(),
            ticket: None,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.phase == Phase::HandedOver
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemAct {
    pub action: Action,
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification_payload: Option<Vec<VerificationItem>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handover_ticket: Option<HandoverTicket>,
}

/// Result of one policy step: the system act plus what the NLU saw.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub act: SystemAct,
    pub extraction: Option<ExtractionResult>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("session {0} has been handed over and accepts no more messages")]
    Closed(String),
}

/// Completeness case (1..=6) of the dictionary, or `None`.
pub fn is_complete(id: &InformationDictionary) -> Option<u8> {
    completeness_case(state_of(id))
}

/// Immutable snapshot for the tutor.
pub fn build_handover_ticket(session: &SessionState, reason: HandoverReason) -> HandoverTicket {
    let summary = session.id.value(Slot::ExactQuestion).map(|v| v.canonical());
    HandoverTicket {
        transcript_ref: session.session_id.clone(),
        intent: session.intent.unwrap_or(Intent::Unknown),
        reason,
        slots: session.id.clone(),
        summary,
        partial: reason != HandoverReason::Completed || (session.intent == Some(Intent::Mathematical) && is_complete(&session.id).is_none()),
    }
}

/// Everything `step` needs besides the session.
pub struct Policy<'a> {
    pub nlu: &'a Nlu,
    pub templates: &'a TemplateStore,
    pub rules: &'a RuleSet,
    pub config: &'a PolicyConfig,
}

impl Policy<'_> {
    /// Processes one user message.
    pub fn step(&self, s: &mut SessionState, text: &str) -> Result<StepOutput, PolicyError> {
        if s.is_closed() {
            return Err(PolicyError::Closed(s.session_id.clone()));
        }
        let turn = s.turn_index;
        s.turn_index += 1;

        let normalized = self.nlu.normalize(text);
        if self.nlu.is_human_request(&normalized) {
            let extraction = ExtractionResult {
                intent: self.nlu.classify_intent(&normalized).0,
                intent_span: None,
                slot_updates: Vec::new(),
                human_requested: true,
                normalized: Some(normalized),
            };
            let act = self.handover(s, HandoverReason::HumanRequested);
            return Ok(StepOutput { act, extraction: Some(extraction) });
        }

        let out = match (s.phase, s.intent) {
            (Phase::Collecting, None) => self.opening(s, text, turn),
            (Phase::IntentMenu, _) => self.intent_menu(s, text, turn),
            (Phase::Collecting, Some(_)) => self.collecting(s, text, turn),
            (Phase::Verifying, _) => StepOutput { act: self.verifying(s, text), extraction: None },
            (Phase::Correcting { letter: None }, _) => StepOutput { act: self.choose_letter(s, text), extraction: None },
            (Phase::Correcting { letter: Some(l) }, _) => self.correct(s, text, l, turn),
            (Phase::AwaitingExactQuestion, _) => {
                let len = text.chars().count();
                s.id.set(Slot::ExactQuestion, SlotValue::Text(text.trim().to_string()), Provenance::Extracted { start: 0, end: len, turn });
                StepOutput { act: self.handover(s, HandoverReason::Completed), extraction: None }
            }
            (Phase::HandedOver, _) => unreachable!("checked above"),
        };
        Ok(out)
    }

    fn context(&self, s: &SessionState, awaiting: Option<Slot>) -> ExtractContext {
        ExtractContext {
            awaiting,
            topic: s.id.topic_id().map(str::to_string),
            history: s.history.iter().map(|h| self.nlu.normalize(h)).collect(),
        }
    }

    fn remember(&self, s: &mut SessionState, text: &str) {
        s.history.push(text.to_string());
        let keep = self.config.history_turns;
        if s.history.len() > keep {
            let drop = s.history.len() - keep;
            s.history.drain(..drop);
        }
    }

    fn opening(&self, s: &mut SessionState, text: &str, turn: usize) -> StepOutput {
        let ctx = self.context(s, None);
        let ex = self.nlu.extract(text, &ctx);
        apply_updates(&mut s.id, &ex, turn, self.nlu.index());
        self.remember(s, text);
        let act = self.route(s, ex.intent);
        StepOutput { act, extraction: Some(ex) }
    }

    fn intent_menu(&self, s: &mut SessionState, text: &str, turn: usize) -> StepOutput {
        let ctx = self.context(s, None);
        let ex = self.nlu.extract(text, &ctx);
        apply_updates(&mut s.id, &ex, turn, self.nlu.index());
        self.remember(s, text);
        let choice = self.nlu.parse_menu_choice(text).unwrap_or(ex.intent);
        let act = self.route(s, choice);
        StepOutput { act, extraction: Some(ex) }
    }

    fn route(&self, s: &mut SessionState, intent: Intent) -> SystemAct {
        match intent {
            Intent::Mathematical => {
                s.intent = Some(Intent::Mathematical);
                s.phase = Phase::Collecting;
                self.next_collecting_act(s)
            }
            Intent::Organizational => {
                s.intent = Some(intent);
                s.phase = Phase::AwaitingExactQuestion;
                self.say(s, Action::OrgAck, None)
            }
            Intent::Contextual => {
                s.intent = Some(intent);
                s.phase = Phase::AwaitingExactQuestion;
                self.say(s, Action::ContextAck, None)
            }
            Intent::Unknown => {
                s.intent_attempts = (s.intent_attempts + 1).min(self.config.max_attempts);
                if s.intent_attempts >= self.config.max_attempts {
                    self.handover(s, HandoverReason::UnclassifiedIntent)
                } else {
                    s.phase = Phase::IntentMenu;
                    self.say(s, Action::UnknownIntentMenu, None)
                }
            }
        }
    }

    fn collecting(&self, s: &mut SessionState, text: &str, turn: usize) -> StepOutput {
        let awaited = s.last_system_action.and_then(Action::awaited_slot);
        let ctx = self.context(s, awaited);
        let ex = self.nlu.extract(text, &ctx);
        apply_updates(&mut s.id, &ex, turn, self.nlu.index());
        self.remember(s, text);
        if let Some(slot) = awaited {
            if !s.id.has(slot) {
                let count = s.fallback_counts.entry(slot).or_insert(0);
                *count = (*count + 1).min(self.config.max_attempts);
                if *count >= self.config.max_attempts {
                    // third failure: the student's words are taken as they are
                    apply_value(
                        &mut s.id,
                        slot,
                        SlotValue::Raw(text.trim().to_string()),
                        Provenance::UserGroundTruth { turn },
                        self.nlu.index(),
                    );
                }
            }
        }
        let act = self.next_collecting_act(s);
        StepOutput { act, extraction: Some(ex) }
    }

    /// Final request when complete, otherwise the table's next question.
    fn next_collecting_act(&self, s: &mut SessionState) -> SystemAct {
        if is_complete(&s.id).is_some() {
            s.phase = Phase::Verifying;
            return self.final_request(s);
        }
        let state = state_of(&s.id);
        let action = self
            .rules
            .next_action(state)
            .expect("an incomplete valid state always has a firing rule");
        if s.asks >= self.config.max_collect_asks() {
            return self.handover(s, HandoverReason::TurnLimit);
        }
        s.asks += 1;
        s.phase = Phase::Collecting;
        self.say(s, action, None)
    }

    fn final_request(&self, s: &mut SessionState) -> SystemAct {
        self.say(s, Action::FinalRequest, None)
    }

    fn words(text: &str) -> Vec<String> {
        crate::normalizer::words(text).into_iter().map(|(w, _, _)| w).collect()
    }

    fn verifying(&self, s: &mut SessionState, text: &str) -> SystemAct {
        let words = Self::words(text);
        let yes = words.iter().any(|w| self.config.affirmations.contains(w));
        let no = words.iter().any(|w| self.config.negations.contains(w));
        match (yes, no) {
            (true, false) => {
                s.phase = Phase::AwaitingExactQuestion;
                self.say(s, Action::ExactQuestion, None)
            }
            (false, true) => {
                s.phase = Phase::Correcting { letter: None };
                self.say(s, Action::VerifyRequest, None)
            }
            _ => self.verification_strike(s, Action::FinalRequest),
        }
    }

    fn verification_strike(&self, s: &mut SessionState, repeat: Action) -> SystemAct {
        s.verification_failures = (s.verification_failures + 1).min(self.config.max_attempts);
        if s.verification_failures >= self.config.max_attempts {
            self.handover(s, HandoverReason::VerificationFailed)
        } else {
            self.say(s, repeat, None)
        }
    }

    fn choose_letter(&self, s: &mut SessionState, text: &str) -> SystemAct {
        let words = Self::words(text);
        let letter = words
            .iter()
            .filter(|w| w.chars().count() == 1)
            .filter_map(|w| w.chars().next())
            .find(|c| s.letters.iter().any(|(l, _)| l == c));
        match letter {
            Some(l) => {
                s.phase = Phase::Correcting { letter: Some(l) };
                self.say(s, Action::CorrectRequest, Some(l))
            }
            None => self.verification_strike(s, Action::VerifyRequest),
        }
    }

    fn correct(&self, s: &mut SessionState, text: &str, letter: char, turn: usize) -> StepOutput {
        let slot = s.letters.iter().find(|(l, _)| *l == letter).map(|(_, sl)| *sl).expect("letter was validated");
        let ctx = self.context(s, Some(slot));
        let update = self.nlu.extract_for_slot(text, slot, &ctx);
        let extraction = update.as_ref().map(|u| ExtractionResult {
            intent: Intent::Unknown,
            intent_span: None,
            slot_updates: vec![u.clone()],
            human_requested: false,
            normalized: None,
        });
        let value = match update {
            Some(u) => u.value,
            None => SlotValue::Raw(text.trim().to_string()),
        };
        apply_value(&mut s.id, slot, value, Provenance::Corrected { turn }, self.nlu.index());
        let act = self.next_collecting_act(s);
        StepOutput { act, extraction }
    }

    fn handover(&self, s: &mut SessionState, reason: HandoverReason) -> SystemAct {
        let ticket = build_handover_ticket(s, reason);
        s.phase = Phase::HandedOver;
        s.ticket = Some(ticket.clone());
        let mut act = self.say(s, Action::HumanHandover, None);
        if ticket.intent == Intent::Mathematical {
            act.handover_ticket = Some(ticket);
        }
        act
    }

    fn say(&self, s: &mut SessionState, action: Action, correction: Option<char>) -> SystemAct {
        let index = self.nlu.index();
        let items = self.templates.verification_items(&s.id, index);
        let payload = matches!(action, Action::FinalRequest | Action::VerifyRequest).then(|| items.clone());
        if action == Action::FinalRequest {
            s.letters = items.iter().map(|i| (i.letter, i.slot)).collect();
        }
        let utterance = self.templates.render(action, &s.id, index, &RenderExtras { correction_letter: correction });
        s.last_system_action = Some(action);
        SystemAct { action, utterance, verification_payload: payload, handover_ticket: None }
    }
}
