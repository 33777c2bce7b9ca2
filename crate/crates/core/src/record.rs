//! Dialogue records and the line-delimited export format.
//!
//! Every export file starts with a header line
//! `{"schema":"<name>","version":1,"fields":[...]}` followed by one JSON object per
//! line with keys in the listed order. Records are sorted by dialogue id.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dialogue_state::Action;
use crate::dictionary::InformationDictionary;
use crate::nlu::Intent;
use crate::policy::HandoverReason;

pub const SCHEMA_VERSION: u32 = 1;

/// The seven entity tags used for sequence labelling.
pub const TAGS: [&str; 7] = ["topic", "subtopic", "exam_mode", "exam_level", "question_nr", "intent", "other"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Handover,
    Abandoned,
}

impl Outcome {
    pub fn parse(s: &str) -> Option<Outcome> {
        match s {
            "handover" => Some(Outcome::Handover),
            "abandoned" => Some(Outcome::Abandoned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityAnnotation {
    /// Generic entity name, one of [`TAGS`] except `other`.
    pub label: String,
    /// Machine value: catalog id, mode, level, question number or intent.
    pub value: String,
    /// Human-readable form of `value`.
    pub canonical: String,
    /// Text as the student typed it.
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn_index: usize,
    pub user_text: String,
    pub entities: Vec<EntityAnnotation>,
    pub next_action: Action,
    pub system_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub dialogue_id: String,
    #[serde(default)]
    pub started_at: Option<String>,
    pub intent: Option<Intent>,
    pub outcome: Outcome,
    #[serde(default)]
    pub handover_reason: Option<HandoverReason>,
    pub final_id: InformationDictionary,
    pub turns: Vec<TurnRecord>,
}

impl DialogueRecord {
    /// Checks the record invariants: contiguous turn indexes, spans inside the text.
    pub fn check(&self) -> Result<(), String> {
        for (i, t) in self.turns.iter().enumerate() {
            if t.turn_index != i {
                return Err(format!("{}: turn {} has index {}", self.dialogue_id, i, t.turn_index));
            }
            let len = t.user_text.chars().count();
            for e in &t.entities {
                if e.start > e.end || e.end > len {
                    return Err(format!("{}: entity span {}..{} outside turn {}", self.dialogue_id, e.start, e.end, i));
                }
            }
        }
        Ok(())
    }

    /// System action that preceded each user turn (`None` before the first).
    pub fn prev_actions(&self) -> Vec<Option<Action>> {
        std::iter::once(None).chain(self.turns.iter().map(|t| Some(t.next_action))).take(self.turns.len()).collect()
    }
}

/// Dialogue id of the n-th stored dialogue.
pub fn dialogue_id(n: u64) -> String {
    format!("dlg-{n:06}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    Dialogues,
    Ids,
    Pairs,
    Triples,
    Entities,
}

impl Artifact {
    pub const ALL: [Artifact; 5] = [Artifact::Dialogues, Artifact::Ids, Artifact::Pairs, Artifact::Triples, Artifact::Entities];

    pub fn name(self) -> &'static str {
        match self {
            Artifact::Dialogues => "dialogues",
            Artifact::Ids => "ids",
            Artifact::Pairs => "pairs",
            Artifact::Triples => "triples",
            Artifact::Entities => "entities",
        }
    }

    pub fn parse(s: &str) -> Option<Artifact> {
        Artifact::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }

    pub fn fields(self) -> &'static [&'static str] {
        match self {
            Artifact::Dialogues => {
                &["dialogue_id", "started_at", "intent", "outcome", "handover_reason", "final_id", "turns"]
            }
            Artifact::Ids => &["dialogue_id", "outcome", "slots"],
            Artifact::Pairs => &["dialogue_id", "turn_index", "question", "response"],
            Artifact::Triples => &["dialogue_id", "turn_index", "user_request", "next_action", "response"],
            Artifact::Entities => &["dialogue_id", "turn_index", "text", "entities"],
        }
    }

    fn header(self) -> String {
        json!({"schema": format!("tutorbot.{}", self.name()), "version": SCHEMA_VERSION, "fields": self.fields()})
            .to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportFilter {
    /// Only dialogues with this outcome; `None` exports all.
    pub outcome: Option<Outcome>,
    /// Inclusive date bounds (`YYYY-MM-DD`) on `started_at`.
    pub since: Option<String>,
    pub until: Option<String>,
}

impl ExportFilter {
    /// Completed dialogues only, which is the default for exports.
    pub fn handover_only() -> Self {
        ExportFilter { outcome: Some(Outcome::Handover), since: None, until: None }
    }

    pub fn all() -> Self {
        ExportFilter::default()
    }

    pub fn accepts(&self, r: &DialogueRecord) -> bool {
        if self.outcome.is_some_and(|o| o != r.outcome) {
            return false;
        }
        let day = r.started_at.as_deref().map(|s| s.get(..10).unwrap_or(s));
        if let Some(since) = &self.since {
            if day.is_none_or(|d| d < since.as_str()) {
                return false;
            }
        }
        if let Some(until) = &self.until {
            if day.is_none_or(|d| d > until.as_str()) {
                return false;
            }
        }
        true
    }
}

/// Builds the selected artifact streams as strings (header line included).
pub fn export_lines(records: &[DialogueRecord], filter: &ExportFilter, kinds: &[Artifact]) -> BTreeMap<Artifact, String> {
    let mut selected: Vec<&DialogueRecord> = records.iter().filter(|r| filter.accepts(r)).collect();
    selected.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));
    let mut out = BTreeMap::new();
    for &kind in kinds {
        let mut buf = kind.header();
        buf.push('\n');
        for r in &selected {
            for line in lines_for(kind, r) {
                buf.push_str(&line);
                buf.push('\n');
            }
        }
        out.insert(kind, buf);
    }
    out
}

fn lines_for(kind: Artifact, r: &DialogueRecord) -> Vec<String> {
    // serde_json keeps insertion order only with preserve_order; build strings by hand
    // from ordered pairs instead so field order is fixed without extra features
    let obj = |pairs: Vec<(&str, serde_json::Value)>| -> String {
        let body: Vec<String> = pairs
            .into_iter()
            .map(|(k, v)| format!("{}:{}", serde_json::Value::from(k), v))
            .collect();
        format!("{{{}}}", body.join(","))
    };
    match kind {
        Artifact::Dialogues => vec![obj(vec![
            ("dialogue_id", json!(r.dialogue_id)),
            ("started_at", json!(r.started_at)),
            ("intent", val(&r.intent)),
            ("outcome", val(&r.outcome)),
            ("handover_reason", val(&r.handover_reason)),
            ("final_id", val(&r.final_id)),
            ("turns", val(&r.turns)),
        ])],
        Artifact::Ids => vec![obj(vec![
            ("dialogue_id", json!(r.dialogue_id)),
            ("outcome", val(&r.outcome)),
            ("slots", val(&r.final_id)),
        ])],
        Artifact::Pairs => r
            .turns
            .iter()
            .map(|t| {
                obj(vec![
                    ("dialogue_id", json!(r.dialogue_id)),
                    ("turn_index", json!(t.turn_index)),
                    ("question", json!(t.user_text)),
                    ("response", json!(t.system_response)),
                ])
            })
            .collect(),
        Artifact::Triples => r
            .turns
            .iter()
            .map(|t| {
                obj(vec![
                    ("dialogue_id", json!(r.dialogue_id)),
                    ("turn_index", json!(t.turn_index)),
                    ("user_request", json!(t.user_text)),
                    ("next_action", json!(t.next_action.as_str())),
                    ("response", json!(t.system_response)),
                ])
            })
            .collect(),
        Artifact::Entities => r
            .turns
            .iter()
            .map(|t| {
                obj(vec![
                    ("dialogue_id", json!(r.dialogue_id)),
                    ("turn_index", json!(t.turn_index)),
                    ("text", json!(t.user_text)),
                    ("entities", val(&t.entities)),
                ])
            })
            .collect(),
    }
}

fn val<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("record types serialize")
}

/// Writes the selected artifacts into `dir`, one file each. Returns the paths.
pub fn write_export(
    dir: &Path,
    records: &[DialogueRecord],
    filter: &ExportFilter,
    kinds: &[Artifact],
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (kind, content) in export_lines(records, filter, kinds) {
        let path = dir.join(kind.file_name());
        let mut f = fs::File::create(&path)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

/// Reads `dialogues.jsonl` back, checking the schema header.
pub fn read_dialogues(path: &Path) -> Result<Vec<DialogueRecord>, ImportError> {
    let io_err = |source| ImportError::Io { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        let fmt_err = |message: String| ImportError::Format { path: path.to_path_buf(), line: i + 1, message };
        if i == 0 {
            let header: serde_json::Value = serde_json::from_str(&line).map_err(|e| fmt_err(e.to_string()))?;
            if header["schema"] != "tutorbot.dialogues" || header["version"] != SCHEMA_VERSION {
                return Err(fmt_err(format!("unexpected header {header}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| fmt_err(e.to_string()))?);
    }
    Ok(out)
}
