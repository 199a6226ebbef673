//! TTL cache of probe results, optionally persisted to a JSON file.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::{Availability, ProbeOutcome, RefListing};
use crate::TOOL_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum CachedValue {
    Outcome(ProbeOutcome),
    Refs(RefListing),
    Availability(Availability),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Entry {
    stored_at: DateTime<Utc>,
    value: CachedValue,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    tool_version: String,
    entries: BTreeMap<String, Entry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Keyed on canonical component keys. Entries older than the TTL are never
/// served; hits return the stored value unchanged.
#[derive(Debug)]
pub struct ProbeCache {
    ttl: Duration,
    entries: Mutex<BTreeMap<String, Entry>>,
    /// Transient results (unreachable, unknown): served within the session
    /// but never written to disk.
    session: Mutex<BTreeMap<String, Entry>>,
    path: Option<PathBuf>,
}

pub const DEFAULT_TTL_HOURS: i64 = 24;

impl Default for ProbeCache {
    fn default() -> Self {
        Self::in_memory(Duration::hours(DEFAULT_TTL_HOURS))
    }
}

fn lock_file(path: &Path) -> Result<File, CacheError> {
    let lock_path = path.with_extension("lock");
    let io = |source| CacheError::Io { path: lock_path.display().to_string(), source };
    if let Some(dir) = lock_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let f = OpenOptions::new().create(true).truncate(false).write(true).open(&lock_path).map_err(io)?;
    f.lock().map_err(io)?;
    Ok(f)
}

fn read_entries(path: &Path) -> BTreeMap<String, Entry> {
    let Ok(text) = std::fs::read_to_string(path) else {
        return BTreeMap::new();
    };
    match serde_json::from_str::<CacheFile>(&text) {
        Ok(file) if file.tool_version == TOOL_VERSION => file.entries,
        Ok(_) => {
            tracing::info!(path = %path.display(), "probe cache written by another tool version; ignoring");
            BTreeMap::new()
        }
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "unreadable probe cache; ignoring");
            BTreeMap::new()
        }
    }
}

impl ProbeCache {
    pub fn in_memory(ttl: Duration) -> Self {
        Self { ttl, entries: Mutex::new(BTreeMap::new()), session: Mutex::new(BTreeMap::new()), path: None }
    }

    /// Opens (or starts) a cache file. The file is read under an exclusive
    /// lock; a file from a different tool version is discarded.
    pub fn open(path: &Path, ttl: Duration) -> Result<Self, CacheError> {
        let _guard = lock_file(path)?;
        Ok(Self { ttl, entries: Mutex::new(read_entries(path)), session: Mutex::new(BTreeMap::new()), path: Some(path.to_owned()) })
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn get(&self, key: &str, now: DateTime<Utc>) -> Option<CachedValue> {
        let fresh = |e: &Entry| (now - e.stored_at < self.ttl && now >= e.stored_at).then(|| e.value.clone());
        if let Some(v) = self.entries.lock().expect("cache lock").get(key).and_then(fresh) {
            return Some(v);
        }
        self.session.lock().expect("cache lock").get(key).and_then(fresh)
    }

    pub fn put(&self, key: &str, value: CachedValue, now: DateTime<Utc>) {
        self.entries.lock().expect("cache lock").insert(key.to_owned(), Entry { stored_at: now, value });
    }

    pub fn put_session(&self, key: &str, value: CachedValue, now: DateTime<Utc>) {
        self.session.lock().expect("cache lock").insert(key.to_owned(), Entry { stored_at: now, value });
    }

    /// Number of persistent entries.
    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the cache back to its file, merging entries another process
    /// stored meanwhile (ours win on conflict). No-op for in-memory caches.
    pub fn save(&self) -> Result<(), CacheError> {
        let Some(path) = &self.path else { return Ok(()) };
        let _guard = lock_file(path)?;
        let mut merged = read_entries(path);
        merged.extend(self.entries.lock().expect("cache lock").iter().map(|(k, v)| (k.clone(), v.clone())));
        let file = CacheFile { tool_version: TOOL_VERSION.to_owned(), entries: merged };
        let tmp = path.with_extension("tmp");
        let io = |source| CacheError::Io { path: path.display().to_string(), source };
        std::fs::write(&tmp, serde_json::to_string(&file).expect("cache serializes")).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }
}
