use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use alt4blind_core::Embedding;
use chrono::{DateTime, Utc};

/// Per-upload authoring state.
#[derive(Debug)]
pub struct Session {
    pub image: Embedding,
    pub uploaded_at: DateTime<Utc>,
    pub last_results: Vec<String>,
    pub excluded_ids: BTreeSet<String>,
    /// Spooled copy of the upload, when spooling is enabled.
    pub spool_path: Option<PathBuf>,
    last_seen: Instant,
}

impl Session {
    pub fn new(image: Embedding, last_results: Vec<String>) -> Self {
        Self {
            image,
            uploaded_at: Utc::now(),
            last_results,
            excluded_ids: BTreeSet::new(),
            spool_path: None,
            last_seen: Instant::now(),
        }
    }
}

type Slot = Arc<tokio::sync::Mutex<Session>>;

struct Entry {
    slot: Slot,
    /// Mirrors `Session::last_seen` so expiry can be checked without
    /// awaiting the session lock.
    last_seen: Instant,
}

/// In-memory sessions with an idle timeout.
///
/// A session expires once `ttl` has passed since its last successful use.
/// Each session sits behind its own async mutex so a refine's read, embed,
/// query, and write happen atomically with respect to that session only.
pub struct SessionStore {
    ttl: Duration,
    inner: Mutex<HashMap<String, Entry>>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            inner: Mutex::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Stores `session` under a fresh 128-bit hex id and returns the id.
    pub fn insert(&self, session: Session) -> String {
        let mut map = self.inner.lock().expect("session map poisoned");
        loop {
            let id = format!("{:032x}", rand::random::<u128>());
            if map.contains_key(&id) {
                continue;
            }
            let last_seen = session.last_seen;
            map.insert(
                id.clone(),
                Entry {
                    slot: Arc::new(tokio::sync::Mutex::new(session)),
                    last_seen,
                },
            );
            return id;
        }
    }

    /// Returns the live session, dropping it first if it has expired.
    pub fn get(&self, id: &str) -> Option<Slot> {
        let mut map = self.inner.lock().expect("session map poisoned");
        let entry = map.get(id)?;
        if entry.last_seen.elapsed() > self.ttl {
            map.remove(id);
            return None;
        }
        Some(entry.slot.clone())
    }

    /// Marks the session as used now.
    pub fn touch(&self, id: &str, session: &mut Session) {
        let now = Instant::now();
        session.last_seen = now;
        if let Some(entry) = self.inner.lock().expect("session map poisoned").get_mut(id) {
            entry.last_seen = now;
        }
    }

    /// Removes expired sessions and returns their slots.
    pub fn purge_expired(&self) -> Vec<Slot> {
        let mut map = self.inner.lock().expect("session map poisoned");
        let expired: Vec<String> = map
            .iter()
            .filter(|(_, e)| e.last_seen.elapsed() > self.ttl)
            .map(|(id, _)| id.clone())
            .collect();
        expired
            .iter()
            .filter_map(|id| map.remove(id).map(|e| e.slot))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alt4blind_core::embedding::SurrogateProvider;
    use alt4blind_core::EmbeddingProvider;

    fn session() -> Session {
        let v = SurrogateProvider::new(1).embed_image(b"png").unwrap();
        Session::new(v, vec!["a".into()])
    }

    #[test]
    fn ids_are_128_bit_hex_and_distinct() {
        let store = SessionStore::new(Duration::from_secs(60));
        let a = store.insert(session());
        let b = store.insert(session());
        assert_eq!(a.len(), 32);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
        assert_ne!(a, b);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn expired_sessions_disappear() {
        let store = SessionStore::new(Duration::from_millis(20));
        let id = store.insert(session());
        assert!(store.get(&id).is_some());
        std::thread::sleep(Duration::from_millis(40));
        assert!(store.get(&id).is_none());
        assert!(store.is_empty());
    }

    #[test]
    fn touch_extends_lifetime() {
        let store = SessionStore::new(Duration::from_millis(80));
        let id = store.insert(session());
        for _ in 0..4 {
            std::thread::sleep(Duration::from_millis(30));
            let slot = store.get(&id).expect("still live");
            let mut s = slot.try_lock().unwrap();
            store.touch(&id, &mut s);
        }
    }

    #[test]
    fn purge_returns_only_expired() {
        let store = SessionStore::new(Duration::from_millis(30));
        store.insert(session());
        std::thread::sleep(Duration::from_millis(50));
        let fresh = store.insert(session());
        assert_eq!(store.purge_expired().len(), 1);
        assert!(store.get(&fresh).is_some());
    }
}
