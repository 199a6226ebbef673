use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{PromptRecord, Templates};

/// Sampling settings recorded with every response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatewaySettings {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_tokens: u32,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self { temperature: 0.2, top_p: 0.9, top_k: 0, max_tokens: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayReply {
    pub text: String,
    pub requested_at: DateTime<Utc>,
    pub completed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("missing credentials: set {0}")]
    MissingCredentials(String),
    #[error("request failed: {0}")]
    Request(String),
    #[error("no recorded response for this prompt")]
    ReplayMiss,
    #[error("request cap of {0} reached")]
    CapReached(usize),
    /// Replayed error records and mock failures.
    #[error("{0}")]
    Other(String),
}

pub trait LlmGateway: Send + Sync {
    fn model(&self) -> &str;
    fn settings(&self) -> GatewaySettings;
    fn submit(&self, prompt: &str) -> Result<GatewayReply, GatewayError>;

    fn batch_submit(&self, prompts: &[&str]) -> Vec<Result<GatewayReply, GatewayError>> {
        prompts.iter().map(|p| self.submit(p)).collect()
    }
}

type RespondFn = dyn Fn(&str) -> Result<String, GatewayError> + Send + Sync;

/// Deterministic gateway: the reply is a pure function of the prompt, and
/// timestamps are a fixed epoch.
#[derive(Clone)]
pub struct MockGateway {
    model: String,
    settings: GatewaySettings,
    respond: Arc<RespondFn>,
}

impl MockGateway {
    pub const EPOCH: &'static str = "2025-01-01T00:00:00Z";

    pub fn new(model: impl Into<String>, respond: impl Fn(&str) -> Result<String, GatewayError> + Send + Sync + 'static) -> Self {
        Self { model: model.into(), settings: GatewaySettings::default(), respond: Arc::new(respond) }
    }
}

impl LlmGateway for MockGateway {
    fn model(&self) -> &str {
        &self.model
    }

    fn settings(&self) -> GatewaySettings {
        self.settings
    }

    fn submit(&self, prompt: &str) -> Result<GatewayReply, GatewayError> {
        let at: DateTime<Utc> = Self::EPOCH.parse().expect("valid epoch");
        (self.respond)(prompt).map(|text| GatewayReply { text, requested_at: at, completed_at: at })
    }
}

/// Answers from a recorded run, reproducing responses, errors and timestamps.
pub struct ReplayGateway {
    model: String,
    settings: GatewaySettings,
    records: HashMap<String, PromptRecord>,
}

impl ReplayGateway {
    pub fn new(records: Vec<PromptRecord>) -> Self {
        let model = records.iter().find_map(|r| r.model.clone()).unwrap_or_else(|| "replay".into());
        let settings = records.iter().find_map(|r| r.settings).unwrap_or_default();
        let mut map = HashMap::new();
        for r in records {
            map.entry(r.prompt_text.clone()).or_insert(r);
        }
        Self { model, settings, records: map }
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::new(RecordStore::load(path)?))
    }
}

impl LlmGateway for ReplayGateway {
    fn model(&self) -> &str {
        &self.model
    }

    fn settings(&self) -> GatewaySettings {
        self.settings
    }

    fn submit(&self, prompt: &str) -> Result<GatewayReply, GatewayError> {
        let r = self.records.get(prompt).ok_or(GatewayError::ReplayMiss)?;
        match (&r.response, &r.error) {
            (Some(text), _) => {
                let requested_at = r.requested_at.or(r.completed_at).unwrap_or_default();
                Ok(GatewayReply { text: text.clone(), requested_at, completed_at: r.completed_at.unwrap_or(requested_at) })
            }
            (None, Some(e)) => Err(GatewayError::Other(e.clone())),
            (None, None) => Err(GatewayError::ReplayMiss),
        }
    }
}

/// OpenAI-compatible chat completions endpoint (also served by Perplexity
/// and most self-hosted servers).
pub struct OpenAiGateway {
    model: String,
    settings: GatewaySettings,
    base_url: String,
    api_key: String,
    cap: Option<usize>,
    sent: AtomicUsize,
    client: reqwest::blocking::Client,
}

impl OpenAiGateway {
    pub const KEY_VAR: &'static str = "SENTINEL_LLM_API_KEY";
    pub const BASE_VAR: &'static str = "SENTINEL_LLM_BASE_URL";
    pub const DEFAULT_BASE: &'static str = "https://api.openai.com/v1";

    /// Reads the API key and base URL from the environment.
    pub fn from_env(model: &str, settings: GatewaySettings, cap: Option<usize>) -> Result<Self, GatewayError> {
        let api_key = std::env::var(Self::KEY_VAR).map_err(|_| GatewayError::MissingCredentials(Self::KEY_VAR.into()))?;
        let base_url = std::env::var(Self::BASE_VAR).unwrap_or_else(|_| Self::DEFAULT_BASE.into());
        Self::new(model, settings, &base_url, &api_key, cap)
    }

    pub fn new(model: &str, settings: GatewaySettings, base_url: &str, api_key: &str, cap: Option<usize>) -> Result<Self, GatewayError> {
        if api_key.is_empty() {
            return Err(GatewayError::MissingCredentials(Self::KEY_VAR.into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| GatewayError::Request(e.to_string()))?;
        Ok(Self {
            model: model.to_owned(),
            settings,
            base_url: base_url.trim_end_matches('/').to_owned(),
            api_key: api_key.to_owned(),
            cap,
            sent: AtomicUsize::new(0),
            client,
        })
    }
}

impl LlmGateway for OpenAiGateway {
    fn model(&self) -> &str {
        &self.model
    }

    fn settings(&self) -> GatewaySettings {
        self.settings
    }

    fn submit(&self, prompt: &str) -> Result<GatewayReply, GatewayError> {
        let n = self.sent.fetch_add(1, Ordering::SeqCst);
        if let Some(cap) = self.cap.filter(|c| n >= *c) {
            return Err(GatewayError::CapReached(cap));
        }
        let s = self.settings;
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": s.temperature,
            "top_p": s.top_p,
            "max_tokens": s.max_tokens,
        });
        if s.top_k > 0 {
            body["top_k"] = json!(s.top_k);
        }
        let requested_at = Utc::now();
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| GatewayError::Request(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Request(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Request(format!("HTTP {}: {}", status.as_u16(), text.chars().take(200).collect::<String>())));
        }
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| GatewayError::Request(e.to_string()))?;
        let content = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::Request("response has no choices[0].message.content".into()))?;
        Ok(GatewayReply { text: content.to_owned(), requested_at, completed_at: Utc::now() })
    }
}

/// Append-only line-delimited record file.
pub struct RecordStore {
    file: File,
}

impl RecordStore {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self { file: OpenOptions::new().create(true).append(true).open(path)? })
    }

    pub fn append(&mut self, r: &PromptRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(r).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }

    pub fn load(path: &Path) -> io::Result<Vec<PromptRecord>> {
        let mut out = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
            out.push(r);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub model: String,
    pub settings: GatewaySettings,
    pub template_hash: String,
    pub prompt_count: usize,
    pub error_count: usize,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(gw: &dyn LlmGateway, records: &[PromptRecord]) -> Self {
        let mut h = Sha256::new();
        h.update(gw.model().as_bytes());
        h.update(serde_json::to_vec(&gw.settings()).unwrap_or_default());
        for r in records {
            h.update(r.prompt_text.as_bytes());
            h.update([0]);
        }
        Self {
            run_id: hex::encode(h.finalize())[..16].to_owned(),
            model: gw.model().to_owned(),
            settings: gw.settings(),
            template_hash: Templates::hash(),
            prompt_count: records.len(),
            error_count: records.iter().filter(|r| r.error.is_some()).count(),
            tool_version: crate::TOOL_VERSION.to_owned(),
        }
    }
}

fn complete(prompt: &PromptRecord, gw: &dyn LlmGateway) -> PromptRecord {
    let mut r = prompt.clone();
    r.model = Some(gw.model().to_owned());
    r.settings = Some(gw.settings());
    match gw.submit(&prompt.prompt_text) {
        Ok(reply) => {
            r.response = Some(reply.text);
            r.requested_at = Some(reply.requested_at);
            r.completed_at = Some(reply.completed_at);
        }
        Err(e) => r.error = Some(e.to_string()),
    }
    r
}

/// Submits every prompt with at most `concurrency` in flight. A failing
/// prompt becomes an error record. Records are appended to `store` in input
/// order as soon as all earlier ones are done, and all are written before
/// this returns.
pub fn run_batch(prompts: &[PromptRecord], gw: &dyn LlmGateway, concurrency: usize, store: Option<&mut RecordStore>) -> io::Result<Vec<PromptRecord>> {
    struct Shared<'s> {
        done: Vec<Option<PromptRecord>>,
        flushed: usize,
        store: Option<&'s mut RecordStore>,
        error: Option<io::Error>,
    }
    let shared = Mutex::new(Shared { done: vec![None; prompts.len()], flushed: 0, store, error: None });
    let next = AtomicUsize::new(0);
    let workers = concurrency.max(1).min(prompts.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(p) = prompts.get(i) else { break };
                let rec = complete(p, gw);
                let mut s = shared.lock().expect("batch state lock");
                s.done[i] = Some(rec);
                while s.flushed < s.done.len() && s.done[s.flushed].is_some() {
                    let k = s.flushed;
                    s.flushed += 1;
                    if s.error.is_some() {
                        continue;
                    }
                    let Shared { done, store, error, .. } = &mut *s;
                    if let Some(store) = store.as_deref_mut() {
                        if let Err(e) = store.append(done[k].as_ref().expect("checked above")) {
                            *error = Some(e);
                        }
                    }
                }
            });
        }
    });
    let s = shared.into_inner().expect("batch state lock");
    if let Some(e) = s.error {
        return Err(e);
    }
    Ok(s.done.into_iter().map(|r| r.expect("every prompt completed")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::SetLabel;

    fn prompts(n: usize) -> Vec<PromptRecord> {
        (0..n).map(|i| PromptRecord::prompt(&format!("q{i}"), SetLabel::Q1, None, format!("prompt {i}"))).collect()
    }

    fn echo() -> MockGateway {
        MockGateway::new("mock", |p| if p.ends_with('1') { Err(GatewayError::Other("boom".into())) } else { Ok(format!("re: {p}")) })
    }

    #[test]
    fn batch_order_and_errors() {
        let out = run_batch(&prompts(3), &echo(), 2, None).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].response.as_deref(), Some("re: prompt 0"));
        assert_eq!(out[1].error.as_deref(), Some("boom"));
        assert!(out[1].response.is_none());
        assert_eq!(out[2].response.as_deref(), Some("re: prompt 2"));
        assert!(out.iter().all(|r| r.settings == Some(GatewaySettings::default())));
    }

    #[test]
    fn store_is_in_input_order_and_replays_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let first = {
            let mut store = RecordStore::create(&path).unwrap();
            run_batch(&prompts(40), &echo(), 8, Some(&mut store)).unwrap()
        };
        let stored = RecordStore::load(&path).unwrap();
        assert_eq!(stored, first);
        let original = std::fs::read(&path).unwrap();

        let replay = ReplayGateway::load(&path).unwrap();
        let path2 = dir.path().join("replay.jsonl");
        let mut store2 = RecordStore::create(&path2).unwrap();
        let again = run_batch(&prompts(40), &replay, 3, Some(&mut store2)).unwrap();
        assert_eq!(again, first);
        assert_eq!(std::fs::read(&path2).unwrap(), original);
    }

    #[test]
    fn replay_miss_is_an_error_record() {
        let replay = ReplayGateway::new(vec![]);
        let out = run_batch(&prompts(1), &replay, 1, None).unwrap();
        assert_eq!(out[0].error.as_deref(), Some("no recorded response for this prompt"));
    }

    #[test]
    fn live_gateway_needs_a_key() {
        let e = OpenAiGateway::new("m", GatewaySettings::default(), "http://127.0.0.1:9", "", None).err().unwrap();
        assert!(matches!(e, GatewayError::MissingCredentials(_)));
    }

    #[test]
    fn manifest_is_deterministic() {
        let recs = prompts(2);
        assert_eq!(RunManifest::new(&echo(), &recs), RunManifest::new(&echo(), &recs));
    }
}
