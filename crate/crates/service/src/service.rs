//! Sessions in memory, backed by the store. Each session has its own lock, so
//! messages to one session run one at a time while other sessions proceed.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use tokio::sync::{broadcast, Mutex, RwLock};
use tutorbot_core::engine::record_of;
use tutorbot_core::record::{dialogue_id, export_lines, Artifact, ExportFilter};
use tutorbot_core::{DialogueRecord, Engine, SessionState, SystemAct, TurnRecord};

use crate::store::{IndexEntry, Store, StoreError, StoredSession};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no session {0}")]
    NotFound(String),
    #[error("session {0} has been handed over")]
    Closed(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("stored session {session} no longer replays: turn {turn} was {stored}, the engine now gives {now}")]
    Replay { session: String, turn: usize, stored: String, now: String },
}

/// What the client sees after a message, and what subscribers receive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageReply {
    pub session_id: String,
    pub turn_index: usize,
    pub user_text: String,
    pub act: SystemAct,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub started_at: String,
    pub closed: bool,
    pub state: SessionState,
    pub turns: Vec<TurnRecord>,
}

struct Live {
    started_at: String,
    state: SessionState,
    turns: Vec<TurnRecord>,
}

struct Entry {
    live: Mutex<Live>,
    events: broadcast::Sender<MessageReply>,
}

impl Entry {
    fn new(live: Live) -> Arc<Self> {
        Arc::new(Entry { live: Mutex::new(live), events: broadcast::channel(64).0 })
    }
}

pub struct Service {
    engine: Arc<Engine>,
    store: Store,
    sessions: RwLock<BTreeMap<String, Arc<Entry>>>,
    /// Serializes session creation so ids stay sequential.
    next_id: Mutex<u64>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Rebuilds the in-memory state of a stored session by replaying its messages.
fn replay(engine: &Engine, stored: StoredSession) -> Result<Live, ServiceError> {
    let mut state = engine.new_session(stored.entry.session_id.clone());
    for t in &stored.turns {
        let turn = engine.step(&mut state, &t.user_text).map_err(|e| ServiceError::Replay {
            session: stored.entry.session_id.clone(),
            turn: t.turn_index,
            stored: t.next_action.as_str().into(),
            now: e.to_string(),
        })?;
        if turn.act.action != t.next_action {
            return Err(ServiceError::Replay {
                session: stored.entry.session_id.clone(),
                turn: t.turn_index,
                stored: t.next_action.as_str().into(),
                now: turn.act.action.as_str().into(),
            });
        }
    }
    Ok(Live { started_at: stored.entry.started_at, state, turns: stored.turns })
}

impl Service {
    /// Opens the storage directory and restores every stored session.
    pub fn open(engine: Arc<Engine>, storage: &Path) -> Result<Self, ServiceError> {
        let (store, stored) = Store::open(storage)?;
        let count = stored.len() as u64;
        let mut sessions = BTreeMap::new();
        for s in stored {
            let id = s.entry.session_id.clone();
            sessions.insert(id, Entry::new(replay(&engine, s)?));
        }
        Ok(Service { engine, store, sessions: RwLock::new(sessions), next_id: Mutex::new(count + 1) })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub async fn session_count(&self) -> usize {
        self.sessions.read().await.len()
    }

    pub async fn create_session(&self) -> Result<SessionView, ServiceError> {
        let mut next = self.next_id.lock().await;
        let entry = IndexEntry { session_id: dialogue_id(*next), started_at: now() };
        self.store.create(&entry)?;
        *next += 1;
        let live = Live { started_at: entry.started_at.clone(), state: self.engine.new_session(entry.session_id.clone()), turns: Vec::new() };
        let view = view(&live);
        self.sessions.write().await.insert(entry.session_id, Entry::new(live));
        Ok(view)
    }

    async fn entry(&self, id: &str) -> Result<Arc<Entry>, ServiceError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| ServiceError::NotFound(id.into()))
    }

    /// Runs one engine step under the session's lock and persists the turn before
    /// returning.
    pub async fn post_message(&self, id: &str, text: &str) -> Result<MessageReply, ServiceError> {
        let entry = self.entry(id).await?;
        let mut live = entry.live.lock().await;
        if live.state.is_closed() {
            return Err(ServiceError::Closed(id.into()));
        }
        let mut state = live.state.clone();
        let turn = self.engine.step(&mut state, text).map_err(|_| ServiceError::Closed(id.into()))?;
        self.store.append(id, &turn.record)?;
        live.state = state;
        live.turns.push(turn.record.clone());
        let reply = MessageReply {
            session_id: id.into(),
            turn_index: turn.record.turn_index,
            user_text: turn.record.user_text,
            act: turn.act,
            closed: live.state.is_closed(),
        };
        // nobody listening is fine
        let _ = entry.events.send(reply.clone());
        Ok(reply)
    }

    pub async fn get_session(&self, id: &str) -> Result<SessionView, ServiceError> {
        let entry = self.entry(id).await?;
        let live = entry.live.lock().await;
        Ok(view(&live))
    }

    pub async fn subscribe(&self, id: &str) -> Result<broadcast::Receiver<MessageReply>, ServiceError> {
        Ok(self.entry(id).await?.events.subscribe())
    }

    /// Records of every session, taken while all session locks are held so no
    /// message lands halfway through the snapshot.
    pub async fn snapshot(&self) -> Vec<DialogueRecord> {
        let sessions = self.sessions.read().await;
        let mut guards = Vec::with_capacity(sessions.len());
        for e in sessions.values() {
            guards.push(e.live.lock().await);
        }
        guards.iter().map(|l| record_of(&l.state, l.turns.clone(), Some(l.started_at.clone()))).collect()
    }

    pub async fn export(&self, filter: &ExportFilter, kinds: &[Artifact]) -> BTreeMap<Artifact, String> {
        export_lines(&self.snapshot().await, filter, kinds)
    }
}

fn view(live: &Live) -> SessionView {
    SessionView {
        session_id: live.state.session_id.clone(),
        started_at: live.started_at.clone(),
        closed: live.state.is_closed(),
        state: live.state.clone(),
        turns: live.turns.clone(),
    }
}
