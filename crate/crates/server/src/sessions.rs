//! Live debugger sessions, each behind its own async mutex so that commands
//! on one session run strictly one after another.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use pomdbg::debugger::{DebugSession, Mode, Status};

use crate::error::{ApiError, ApiResult, CAPACITY};

pub struct SessionEntry {
    pub session: tokio::sync::Mutex<DebugSession>,
    touched: Mutex<Instant>,
    closed: AtomicBool,
    /// Bumped whenever an autoplay loop starts; older loops then exit.
    autoplay_generation: AtomicU64,
}

impl SessionEntry {
    fn touch(&self) {
        *self.touched.lock().unwrap() = Instant::now();
    }

    fn idle(&self) -> Duration {
        self.touched.lock().unwrap().elapsed()
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    fn close(&self) {
        self.closed.store(true, Ordering::Release);
    }
}

pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    max_sessions: usize,
    ttl: Duration,
}

impl SessionManager {
    pub fn new(max_sessions: usize, ttl: Duration) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            max_sessions,
            ttl,
        }
    }

    fn evict_expired(&self, map: &mut HashMap<String, Arc<SessionEntry>>) {
        map.retain(|_, e| {
            let keep = e.idle() < self.ttl;
            if !keep {
                e.close();
            }
            keep
        });
    }

    pub fn insert(&self, session: DebugSession) -> ApiResult<Arc<SessionEntry>> {
        let mut map = self.sessions.write().unwrap();
        if map.len() >= self.max_sessions {
            self.evict_expired(&mut map);
        }
        if map.len() >= self.max_sessions {
            return Err(ApiError::new(
                CAPACITY,
                format!("session limit of {} reached", self.max_sessions),
            ));
        }
        let id = session.id().to_string();
        let entry = Arc::new(SessionEntry {
            session: tokio::sync::Mutex::new(session),
            touched: Mutex::new(Instant::now()),
            closed: AtomicBool::new(false),
            autoplay_generation: AtomicU64::new(0),
        });
        map.insert(id, entry.clone());
        Ok(entry)
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<SessionEntry>> {
        let entry = self.sessions.read().unwrap().get(id).cloned();
        match entry {
            Some(e) if e.idle() < self.ttl => {
                e.touch();
                Ok(e)
            }
            Some(_) => {
                if let Some(e) = self.sessions.write().unwrap().remove(id) {
                    e.close();
                }
                Err(not_found(id))
            }
            None => Err(not_found(id)),
        }
    }

    pub fn remove(&self, id: &str) -> ApiResult<()> {
        let entry = self.sessions.write().unwrap().remove(id);
        match entry {
            Some(e) => {
                e.close();
                Ok(())
            }
            None => Err(not_found(id)),
        }
    }

    pub fn all(&self) -> Vec<Arc<SessionEntry>> {
        let mut map = self.sessions.write().unwrap();
        self.evict_expired(&mut map);
        map.values().cloned().collect()
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError::from(pomdbg::Error::NotFound(format!("session {id}")))
}

/// Advances an autoplay session on its own clock until it stops running or
/// is deleted.
pub fn spawn_autoplay(entry: Arc<SessionEntry>) {
    let generation = entry.autoplay_generation.fetch_add(1, Ordering::AcqRel) + 1;
    tokio::spawn(async move {
        loop {
            let interval = match entry.session.lock().await.mode() {
                Mode::Autoplay { interval_ms } => Duration::from_millis(interval_ms.max(1)),
                Mode::Manual => return,
            };
            tokio::time::sleep(interval).await;
            if entry.is_closed()
                || entry.autoplay_generation.load(Ordering::Acquire) != generation
            {
                return;
            }
            let mut session = entry.session.lock().await;
            if session.status() != Status::Running {
                return;
            }
            if let Err(e) = session.tick() {
                tracing::warn!(session = session.id(), error = %e, "autoplay stopped");
                return;
            }
            if session.status() != Status::Running {
                return;
            }
        }
    });
}
