//! Fixture archives: recorded request/response pairs replayed offline.
//!
//! On disk an archive is a directory holding `manifest.json` and one JSON
//! record per request under `records/`, named after a hash of the request key.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::http::{request_key, HttpRequest, HttpResponse, Transport, TransportError, KEPT_HEADERS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: String,
    pub recorded_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<RecordedResponse>,
    /// Transport error class (`timeout`, `connect: ...`, `exception: ...`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FixtureRecord {
    fn replay(&self) -> Result<HttpResponse, TransportError> {
        match (&self.response, &self.error) {
            (Some(r), _) => Ok(HttpResponse {
                status: r.status,
                headers: r.headers.clone(),
                body: r.body.clone(),
                observed_at: self.recorded_at,
            }),
            (None, Some(e)) => Err(TransportError::from_record(e)),
            (None, None) => Err(TransportError::Other(format!("empty fixture record for {}", self.key))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestEntry {
    key: String,
    file: String,
    recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    created_at: DateTime<Utc>,
    entries: Vec<ManifestEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture io {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("fixture {path}: {message}")]
    Format { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FixtureError + '_ {
    move |source| FixtureError::Io { path: path.display().to_string(), source }
}

pub fn record_file_name(key: &str) -> String {
    let digest = hex::encode(Sha256::digest(key.as_bytes()));
    format!("{}.json", &digest[..16])
}

/// In-memory archive keyed by request key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureArchive {
    pub created_at: DateTime<Utc>,
    records: BTreeMap<String, FixtureRecord>,
}

impl FixtureArchive {
    pub fn new(created_at: DateTime<Utc>) -> Self {
        Self { created_at, records: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&FixtureRecord> {
        self.records.get(key)
    }

    pub fn records(&self) -> impl Iterator<Item = &FixtureRecord> {
        self.records.values()
    }

    pub fn insert(&mut self, record: FixtureRecord) {
        self.records.insert(record.key.clone(), record);
    }

    /// Adds a GET response for `url`, recorded at the archive's creation time.
    pub fn respond(&mut self, url: &str, status: u16, body: impl Into<String>) -> &mut Self {
        self.respond_with_headers(url, status, &[], body)
    }

    pub fn respond_json(&mut self, url: &str, status: u16, body: &serde_json::Value) -> &mut Self {
        self.respond_with_headers(url, status, &[("content-type", "application/json")], body.to_string())
    }

    pub fn respond_with_headers(&mut self, url: &str, status: u16, headers: &[(&str, &str)], body: impl Into<String>) -> &mut Self {
        let headers = headers.iter().map(|(k, v)| (k.to_ascii_lowercase(), (*v).to_owned())).collect();
        self.insert(FixtureRecord {
            key: request_key("GET", url),
            recorded_at: self.created_at,
            response: Some(RecordedResponse { status, headers, body: body.into() }),
            error: None,
        });
        self
    }

    /// Adds a transport failure (`timeout`, `connect`, ...) for `url`.
    pub fn fail(&mut self, url: &str, error: TransportError) -> &mut Self {
        self.insert(FixtureRecord { key: request_key("GET", url), recorded_at: self.created_at, response: None, error: Some(error.to_record()) });
        self
    }

    pub fn save(&self, dir: &Path) -> Result<(), FixtureError> {
        let records_dir = dir.join("records");
        std::fs::create_dir_all(&records_dir).map_err(io_err(&records_dir))?;
        let mut entries = Vec::new();
        for record in self.records.values() {
            let file = format!("records/{}", record_file_name(&record.key));
            let path = dir.join(&file);
            let text = serde_json::to_string_pretty(record).expect("record serializes");
            std::fs::write(&path, text).map_err(io_err(&path))?;
            entries.push(ManifestEntry { key: record.key.clone(), file, recorded_at: record.recorded_at });
        }
        let manifest = Manifest { format: 1, created_at: self.created_at, entries };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self, FixtureError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| FixtureError::Format { path: path.display().to_string(), message: e.to_string() })?;
        let mut archive = Self::new(manifest.created_at);
        for entry in manifest.entries {
            let path = dir.join(&entry.file);
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let record: FixtureRecord =
                serde_json::from_str(&text).map_err(|e| FixtureError::Format { path: path.display().to_string(), message: e.to_string() })?;
            if record.key != entry.key {
                return Err(FixtureError::Format {
                    path: path.display().to_string(),
                    message: format!("record key '{}' does not match manifest key '{}'", record.key, entry.key),
                });
            }
            archive.insert(record);
        }
        Ok(archive)
    }

    /// SHA-256 of the archive's canonical serialization.
    pub fn manifest_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.created_at.to_rfc3339().as_bytes());
        for r in self.records.values() {
            h.update(serde_json::to_vec(r).expect("record serializes"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Serves requests from an archive. A request without a record is a
/// [`TransportError::FixtureMiss`], never a network call.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    archive: Arc<FixtureArchive>,
}

impl ReplayTransport {
    pub fn new(archive: FixtureArchive) -> Self {
        Self { archive: Arc::new(archive) }
    }

    pub fn archive(&self) -> &FixtureArchive {
        &self.archive
    }
}

impl Transport for ReplayTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let key = req.key();
        self.archive.get(&key).ok_or(TransportError::FixtureMiss(key))?.replay()
    }
}

/// Wraps a transport and records every exchange it performs.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    archive: Mutex<FixtureArchive>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>, created_at: DateTime<Utc>) -> Self {
        Self { inner, archive: Mutex::new(FixtureArchive::new(created_at)) }
    }

    pub fn archive(&self) -> FixtureArchive {
        self.archive.lock().expect("recorder lock").clone()
    }
}

impl Transport for RecordingTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let result = self.inner.send(req);
        let (response, error, recorded_at) = match &result {
            Ok(r) => {
                let headers = r.headers.iter().filter(|(k, _)| KEPT_HEADERS.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect();
                (Some(RecordedResponse { status: r.status, headers, body: r.body.clone() }), None, r.observed_at)
            }
            Err(TransportError::FixtureMiss(_)) => return result,
            Err(e) => (None, Some(e.to_record()), Utc::now()),
        };
        // Retries overwrite earlier attempts, so the archive holds the final
        // exchange per key.
        self.archive.lock().expect("recorder lock").insert(FixtureRecord { key: req.key(), recorded_at, response, error });
        result
    }

    fn is_live(&self) -> bool {
        self.inner.is_live()
    }
}
