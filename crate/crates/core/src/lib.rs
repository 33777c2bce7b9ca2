//! Rule-driven dialogue engine that collects the details of a student's question
//! (chapter, section, exam mode, level, question number), verifies them with the
//! student and hands a ticket to a human tutor.
//!
//! Processing per message: [`normalizer`] -> [`nlu`] (keyword intent, patterns,
//! [`catalog`] fuzzy search) -> [`dictionary`] update -> [`policy`] (which consults the
//! [`dialogue_state`] transition rules) -> [`responder`] templates.

pub mod catalog;
pub mod dialogue_state;
pub mod dictionary;
pub mod engine;
pub mod error;
pub mod nlu;
pub mod normalizer;
pub mod policy;
pub mod record;
pub mod responder;

pub use catalog::{CatalogEntry, CatalogIndex, EntryKind, ExamMode, Level, SearchHit, SearchParams};
pub use dialogue_state::{Action, DesignConfig, Flag, RuleSet, StateVector, TransitionTable};
pub use dictionary::{InformationDictionary, Provenance, Slot, SlotValue};
pub use engine::{Engine, EngineConfig, Turn};
pub use error::ConfigError;
pub use nlu::{ExtractionResult, Intent, Nlu};
pub use normalizer::{normalize, NormalizedText, NormalizerConfig};
pub use policy::{HandoverReason, HandoverTicket, Phase, PolicyConfig, SessionState, SystemAct};
pub use record::{DialogueRecord, Outcome, TurnRecord};
pub use responder::TemplateStore;
