//! The assembled dialogue engine: catalog, NLU, rules, policy and templates.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::catalog::{build_index, default_entries, load_catalog, SearchParams};
use crate::dialogue_state::{DesignConfig, RuleSet};
use crate::dictionary::{Slot, SlotValue};
use crate::error::ConfigError;
use crate::nlu::{ExtractionResult, IntentRules, Nlu};
use crate::normalizer::{char_slice, NormalizerConfig};
use crate::policy::{Phase, Policy, PolicyConfig, PolicyError, SessionState, SystemAct};
use crate::record::{DialogueRecord, EntityAnnotation, Outcome, TurnRecord};
use crate::responder::TemplateStore;

/// Paths of data files; `None` selects the bundled default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub catalog: Option<PathBuf>,
    pub normalizer: Option<PathBuf>,
    pub intents: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub locale: Option<String>,
    pub search: Option<SearchParams>,
}

pub struct Engine {
    nlu: Nlu,
    templates: TemplateStore,
    rules: RuleSet,
    policy: PolicyConfig,
}

/// One processed user message.
#[derive(Debug, Clone)]
pub struct Turn {
    pub record: TurnRecord,
    pub act: SystemAct,
}

impl Engine {
    pub fn from_config(cfg: &EngineConfig) -> Result<Self, ConfigError> {
        let normalizer = match &cfg.normalizer {
            Some(p) => NormalizerConfig::load(p)?,
            None => NormalizerConfig::default(),
        };
        let entries = match &cfg.catalog {
            Some(p) => load_catalog(p)?,
            None => default_entries(),
        };
        let index = build_index(entries, &normalizer)?;
        let rules = match &cfg.intents {
            Some(p) => IntentRules::load(p)?,
            None => IntentRules::default(),
        };
        let params = cfg.search.unwrap_or_default();
        params.validate()?;
        let locale = cfg.locale.as_deref().unwrap_or("en");
        let templates = match &cfg.templates {
            Some(p) => TemplateStore::load(p, locale)?,
            None => TemplateStore::bundled(locale)?,
        };
        let policy = match &cfg.policy {
            Some(p) => PolicyConfig::load(p)?,
            None => PolicyConfig::default(),
        };
        Ok(Engine {
            nlu: Nlu::new(index, &rules, params),
            templates,
            rules: RuleSet::new(DesignConfig::current()).map_err(ConfigError::Invalid)?,
            policy,
        })
    }

    /// Engine over the bundled data in English.
    pub fn bundled() -> Self {
        Self::from_config(&EngineConfig::default()).expect("bundled data is valid")
    }

    pub fn nlu(&self) -> &Nlu {
        &self.nlu
    }

    pub fn templates(&self) -> &TemplateStore {
        &self.templates
    }

    pub fn policy_config(&self) -> &PolicyConfig {
        &self.policy
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn new_session(&self, session_id: impl Into<String>) -> SessionState {
        SessionState::new(session_id)
    }

    /// Runs one policy step and describes it as a turn record.
    pub fn step(&self, session: &mut SessionState, text: &str) -> Result<Turn, PolicyError> {
        let policy = Policy { nlu: &self.nlu, templates: &self.templates, rules: &self.rules, config: &self.policy };
        let turn_index = session.turn_index;
        let out = policy.step(session, text)?;
        let entities = out.extraction.as_ref().map(|e| self.entities(text, e)).unwrap_or_default();
        let record = TurnRecord {
            turn_index,
            user_text: text.to_string(),
            entities,
            next_action: out.act.action,
            system_response: out.act.utterance.clone(),
        };
        Ok(Turn { record, act: out.act })
    }

    /// Entity annotations for a turn: one per slot update plus the intent keyword.
    pub fn entities(&self, text: &str, ex: &ExtractionResult) -> Vec<EntityAnnotation> {
        let index = self.nlu.index();
        let mut out = Vec::new();
        if let Some((start, end)) = ex.intent_span {
            out.push(EntityAnnotation {
                label: "intent".into(),
                value: ex.intent.as_str().into(),
                canonical: ex.intent.as_str().into(),
                surface: char_slice(text, start, end),
                start,
                end,
            });
        }
        for u in &ex.slot_updates {
            let label = match u.slot {
                Slot::Topic => "topic",
                Slot::Subtopic => "subtopic",
                Slot::ExamMode => "exam_mode",
                Slot::ExamLevel => "exam_level",
                Slot::QuestionNumber => "question_nr",
                Slot::ExactQuestion => continue,
            };
            let canonical = match &u.value {
                SlotValue::Entry(id) => index.get(id).map(|e| e.title.clone()).unwrap_or_else(|| id.clone()),
                v => v.canonical(),
            };
            out.push(EntityAnnotation {
                label: label.into(),
                value: u.value.canonical(),
                canonical,
                surface: char_slice(text, u.start, u.end),
                start: u.start,
                end: u.end,
            });
        }
        out.sort_by_key(|e| (e.start, e.end));
        out
    }

    /// Plays a scripted list of user messages, stopping at hand-over.
    pub fn run_dialogue<S: AsRef<str>>(&self, dialogue_id: &str, messages: &[S]) -> (DialogueRecord, Vec<SystemAct>) {
        let mut session = self.new_session(dialogue_id);
        let mut turns = Vec::new();
        let mut acts = Vec::new();
        for m in messages {
            match self.step(&mut session, m.as_ref()) {
                Ok(t) => {
                    turns.push(t.record);
                    acts.push(t.act);
                }
                Err(_) => break,
            }
        }
        (record_of(&session, turns, None), acts)
    }
}

/// Builds the stored form of a dialogue from its session and turns.
pub fn record_of(session: &SessionState, turns: Vec<TurnRecord>, started_at: Option<String>) -> DialogueRecord {
    let outcome = if session.phase == Phase::HandedOver { Outcome::Handover } else { Outcome::Abandoned };
    DialogueRecord {
        dialogue_id: session.session_id.clone(),
        started_at,
        intent: session.intent,
        outcome,
        handover_reason: session.ticket.as_ref().map(|t| t.reason),
        final_id: session.id.clone(),
        turns,
    }
}
