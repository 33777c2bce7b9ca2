//! Scenario files: scripted user turns with the system action expected after each.
//!
//! ```toml
//! [[scenario]]
//! id = "case1-final-exam"
//! description = "final examination named in one message"
//! tags = ["case1"]
//!
//! [[scenario.turn]]
//! user = "Final examination question 3 in Chapter 2"
//! expect = "final_request"
//! slots = { topic = "t02", exam_mode = "final_examination", question_number = "3" }
//!
//! [scenario.terminal]
//! outcome = "open"
//! ```
//!
//! `slots` is the exact set of slots whose value changed in that turn. Values are
//! canonical strings: catalog ids, mode and level names, question numbers. A value
//! typed verbatim after three failed attempts is written `raw:<text>`; a cleared slot
//! is written `-`. The exact question is only compared when listed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tutorbot_core::dialogue_state::Action;
use tutorbot_core::dictionary::Slot;
use tutorbot_core::HandoverReason;

/// Longest script a scenario may contain.
pub const MAX_TURNS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(rename = "turn")]
    pub turns: Vec<ScriptTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Terminal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptTurn {
    pub user: String,
    pub expect: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terminal {
    /// `handover` or `open`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Exact final contents of the structured slots (the exact question excluded
    /// unless listed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub scenario: Vec<Scenario>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("scenario {id}: {message}")]
    Invalid { id: String, message: String },
    #[error("scenario id {0} is used twice")]
    Duplicate(String),
}

impl Scenario {
    /// Checks script length and that every name refers to a known action, slot or
    /// hand-over reason.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |message: String| ScenarioError::Invalid { id: self.id.clone(), message };
        if self.turns.is_empty() {
            return Err(bad("no turns".into()));
        }
        if self.turns.len() > MAX_TURNS {
            return Err(bad(format!("{} turns, at most {MAX_TURNS} allowed", self.turns.len())));
        }
        for (i, t) in self.turns.iter().enumerate() {
            if Action::parse(&t.expect).is_none() {
                return Err(bad(format!("turn {i}: unknown action {:?}", t.expect)));
            }
            for k in t.slots.iter().flat_map(|m| m.keys()) {
                Slot::parse(k).ok_or_else(|| bad(format!("turn {i}: unknown slot {k:?}")))?;
            }
        }
        if let Some(term) = &self.terminal {
            if let Some(o) = &term.outcome {
                if o != "handover" && o != "open" {
                    return Err(bad(format!("unknown outcome {o:?}")));
                }
            }
            if let Some(r) = &term.reason {
                HandoverReason::parse(r).ok_or_else(|| bad(format!("unknown hand-over reason {r:?}")))?;
            }
            for k in term.slots.iter().flat_map(|m| m.keys()) {
                Slot::parse(k).ok_or_else(|| bad(format!("unknown slot {k:?}")))?;
            }
        }
        Ok(())
    }
}

pub fn parse_scenarios(text: &str, path: &Path) -> Result<Vec<Scenario>, ScenarioError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    for s in &file.scenario {
        s.validate()?;
    }
    Ok(file.scenario)
}

pub fn load_file(path: &Path) -> Result<Vec<Scenario>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    parse_scenarios(&text, path)
}

/// Loads a file, or every `*.toml` in a directory (sorted by name). Ids must be
/// unique across everything loaded.
pub fn load(path: &Path) -> Result<Vec<Scenario>, ScenarioError> {
    let files = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for f in files {
        for s in load_file(&f)? {
            if !seen.insert(s.id.clone()) {
                return Err(ScenarioError::Duplicate(s.id));
            }
            out.push(s);
        }
    }
    Ok(out)
}

/// Serializes scenarios in the file format above.
pub fn to_toml(scenarios: &[Scenario]) -> String {
    toml::to_string(&ScenarioFile { scenario: scenarios.to_vec() }).expect("scenarios serialize")
}

/// Directory of the authored scenario corpus shipped with this crate.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}
