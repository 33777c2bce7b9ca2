//! The information dictionary: the six slots a ticket needs, with the provenance of
//! every value.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogIndex, ExamMode, Level};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Topic,
    Subtopic,
    ExamMode,
    QuestionNumber,
    ExamLevel,
    ExactQuestion,
}

impl Slot {
    pub const ALL: [Slot; 6] =
        [Slot::Topic, Slot::Subtopic, Slot::ExamMode, Slot::QuestionNumber, Slot::ExamLevel, Slot::ExactQuestion];

    /// Slots listed in the verification summary, in display order.
    pub const VERIFIED: [Slot; 5] = [Slot::Topic, Slot::Subtopic, Slot::ExamMode, Slot::QuestionNumber, Slot::ExamLevel];

    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Topic => "topic",
            Slot::Subtopic => "subtopic",
            Slot::ExamMode => "exam_mode",
            Slot::QuestionNumber => "question_number",
            Slot::ExamLevel => "exam_level",
            Slot::ExactQuestion => "exact_question",
        }
    }

    pub fn parse(s: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A slot value. `Raw` holds verbatim user text that could not be resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum SlotValue {
    /// Catalog entry id (topic, subtopic).
    Entry(String),
    Mode(ExamMode),
    Level(Level),
    /// Canonical text (question number, exact question).
    Text(String),
    Raw(String),
}

impl SlotValue {
    pub fn is_raw(&self) -> bool {
        matches!(self, SlotValue::Raw(_))
    }

    /// Plain string form used in exports.
    pub fn canonical(&self) -> String {
        match self {
            SlotValue::Entry(s) | SlotValue::Text(s) | SlotValue::Raw(s) => s.clone(),
            SlotValue::Mode(m) => m.as_str().to_string(),
            SlotValue::Level(l) => l.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Extracted { start: usize, end: usize, turn: usize },
    UserGroundTruth { turn: usize },
    Corrected { turn: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotFill {
    pub value: SlotValue,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformationDictionary {
    slots: BTreeMap<Slot, SlotFill>,
}

impl InformationDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, slot: Slot) -> Option<&SlotFill> {
        self.slots.get(&slot)
    }

    pub fn value(&self, slot: Slot) -> Option<&SlotValue> {
        self.slots.get(&slot).map(|f| &f.value)
    }

    pub fn has(&self, slot: Slot) -> bool {
        self.slots.contains_key(&slot)
    }

    pub fn set(&mut self, slot: Slot, value: SlotValue, provenance: Provenance) {
        self.slots.insert(slot, SlotFill { value, provenance });
    }

    pub fn clear(&mut self, slot: Slot) {
        self.slots.remove(&slot);
    }

    pub fn filled(&self) -> impl Iterator<Item = (Slot, &SlotFill)> {
        self.slots.iter().map(|(s, f)| (*s, f))
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn topic_id(&self) -> Option<&str> {
        match self.value(Slot::Topic) {
            Some(SlotValue::Entry(id)) => Some(id),
            _ => None,
        }
    }

    pub fn subtopic_id(&self) -> Option<&str> {
        match self.value(Slot::Subtopic) {
            Some(SlotValue::Entry(id)) => Some(id),
            _ => None,
        }
    }

    pub fn exam_mode(&self) -> Option<ExamMode> {
        match self.value(Slot::ExamMode) {
            Some(SlotValue::Mode(m)) => Some(*m),
            _ => None,
        }
    }

    pub fn exam_level(&self) -> Option<Level> {
        match self.value(Slot::ExamLevel) {
            Some(SlotValue::Level(l)) => Some(*l),
            _ => None,
        }
    }

    /// Checks the dictionary invariants; returns a description of the first violation.
    pub fn check(&self, index: &CatalogIndex) -> Result<(), String> {
        if let (Some(topic), Some(sub)) = (self.topic_id(), self.subtopic_id()) {
            let parent = index.get(sub).and_then(|e| e.parent.as_deref());
            if parent != Some(topic) {
                return Err(format!("subtopic {sub} is not under topic {topic}"));
            }
        }
        match (self.exam_mode(), self.exam_level()) {
            (Some(ExamMode::FinalExamination), Some(Level::Section)) => {
                return Err("final examination with section level".into())
            }
            (Some(ExamMode::Quiz), Some(Level::Chapter)) => return Err("quiz with chapter level".into()),
            _ => {}
        }
        Ok(())
    }
}
