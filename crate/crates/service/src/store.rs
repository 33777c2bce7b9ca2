//! Append-only storage: one JSON-lines log per dialogue plus an index of sessions.
//!
//! ```text
//! <storage>/index.jsonl             {"session_id":"dlg-000001","started_at":"2026-..."}
//! <storage>/sessions/<id>.jsonl     one TurnRecord per line
//! ```
//!
//! Every append is flushed to disk before the caller answers the client, so an
//! acknowledged turn survives a restart. A torn last line (a crash mid-write, never
//! acknowledged) is dropped when the log is read back.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tutorbot_core::TurnRecord;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub started_at: String,
}

/// A session as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSession {
    pub entry: IndexEntry,
    pub turns: Vec<TurnRecord>,
}

pub struct Store {
    dir: PathBuf,
    index: Mutex<File>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn append_line(path: &Path, line: &str) -> Result<(), StoreError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io(path))?;
    write_synced(&mut f, line, path)
}

fn write_synced(f: &mut File, line: &str, path: &Path) -> Result<(), StoreError> {
    f.write_all(format!("{line}\n").as_bytes()).map_err(io(path))?;
    f.sync_data().map_err(io(path))
}

/// Parses JSON lines, tolerating only an unterminated last line.
fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(path)(e)),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() && !complete => {
                tracing::warn!(path = %path.display(), "dropping torn last line");
            }
            Err(e) => return Err(StoreError::Corrupt { path: path.into(), line: i + 1, message: e.to_string() }),
        }
    }
    Ok(out)
}

/// Cuts an unterminated last line left by a crash, so later appends start clean.
fn repair(path: &Path) -> Result<(), StoreError> {
    let text = match fs::read(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(io(path)(e)),
    };
    if text.last().is_some_and(|b| *b != b'\n') {
        let keep = text.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        fs::write(path, &text[..keep]).map_err(io(path))?;
    }
    Ok(())
}

impl Store {
    /// Opens (creating if needed) a storage directory and reads back every session.
    pub fn open(dir: &Path) -> Result<(Store, Vec<StoredSession>), StoreError> {
        let sessions_dir = dir.join("sessions");
        fs::create_dir_all(&sessions_dir).map_err(io(&sessions_dir))?;
        let index_path = dir.join("index.jsonl");
        let entries: Vec<IndexEntry> = read_lines(&index_path)?;
        repair(&index_path)?;
        let mut sessions = Vec::with_capacity(entries.len());
        for entry in entries {
            let path = sessions_dir.join(format!("{}.jsonl", entry.session_id));
            let turns = read_lines(&path)?;
            repair(&path)?;
            sessions.push(StoredSession { entry, turns });
        }
        let index = OpenOptions::new().create(true).append(true).open(&index_path).map_err(io(&index_path))?;
        Ok((Store { dir: dir.to_path_buf(), index: Mutex::new(index) }, sessions))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn log_path(&self, session_id: &str) -> PathBuf {
        self.dir.join("sessions").join(format!("{session_id}.jsonl"))
    }

    pub fn create(&self, entry: &IndexEntry) -> Result<(), StoreError> {
        let log = self.log_path(&entry.session_id);
        File::create(&log).map_err(io(&log))?;
        let path = self.dir.join("index.jsonl");
        let mut f = self.index.lock().expect("index lock");
        write_synced(&mut f, &serde_json::to_string(entry).expect("index entries serialize"), &path)
    }

    pub fn append(&self, session_id: &str, turn: &TurnRecord) -> Result<(), StoreError> {
        append_line(&self.log_path(session_id), &serde_json::to_string(turn).expect("turn records serialize"))
    }
}
