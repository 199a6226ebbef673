//! Transport abstraction plus the retry, redirect and politeness policy
//! shared by every probe.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use super::{Clock, ProbeError};

/// Response headers kept in fixtures and visible to probes.
pub const KEPT_HEADERS: &[&str] = &["content-type", "link", "location", "retry-after", "x-ratelimit-remaining", "x-ratelimit-reset"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: String,
    pub url: String,
    /// Sent with the request but not part of the request key.
    pub headers: Vec<(String, String)>,
    /// Whether the caller reads the body. Probes of plain URLs only need the
    /// status line.
    pub want_body: bool,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self { method: "GET".into(), url: url.into(), headers: Vec::new(), want_body: true }
    }

    pub fn status_only(mut self) -> Self {
        self.want_body = false;
        self
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_owned(), value.into()));
        self
    }

    /// Method plus canonical URL.
    pub fn key(&self) -> String {
        request_key(&self.method, &self.url)
    }

    pub fn host(&self) -> String {
        Url::parse(&self.url).ok().and_then(|u| u.host_str().map(str::to_owned)).unwrap_or_default()
    }
}

pub fn request_key(method: &str, url: &str) -> String {
    let canonical = Url::parse(url).map(|u| u.to_string()).unwrap_or_else(|_| url.to_owned());
    format!("{} {}", method.to_ascii_uppercase(), canonical)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub body: String,
    pub observed_at: DateTime<Utc>,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(&name.to_ascii_lowercase()).map(String::as_str)
    }

    pub fn json(&self) -> Option<serde_json::Value> {
        serde_json::from_str(&self.body).ok()
    }

    pub fn is_redirect(&self) -> bool {
        matches!(self.status, 301 | 302 | 303 | 307 | 308)
    }

    /// GitHub-style rate limiting: 429, or 403 with the quota exhausted.
    pub fn is_rate_limited(&self) -> bool {
        self.status == 429 || (self.status == 403 && (self.header("x-ratelimit-remaining") == Some("0") || self.header("retry-after").is_some()))
    }

    pub fn retry_after(&self) -> Option<String> {
        self.header("retry-after").or_else(|| self.header("x-ratelimit-reset")).map(str::to_owned)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransportError {
    #[error("timeout")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("exception: {0}")]
    Other(String),
    #[error("no fixture record for request '{0}'")]
    FixtureMiss(String),
}

impl TransportError {
    /// Short error class recorded as probe evidence.
    pub fn class(&self) -> &'static str {
        match self {
            TransportError::Timeout => "timeout",
            TransportError::Connect(_) => "connect",
            TransportError::Other(_) => "exception",
            TransportError::FixtureMiss(_) => "fixture-miss",
        }
    }

    /// Parses the `error` field of a fixture record.
    pub fn from_record(s: &str) -> Self {
        match s.split_once(':') {
            _ if s == "timeout" => TransportError::Timeout,
            Some(("connect", rest)) => TransportError::Connect(rest.trim().to_owned()),
            Some(("exception", rest)) => TransportError::Other(rest.trim().to_owned()),
            _ if s == "connect" => TransportError::Connect(String::new()),
            _ => TransportError::Other(s.to_owned()),
        }
    }

    pub fn to_record(&self) -> String {
        match self {
            TransportError::Timeout => "timeout".into(),
            TransportError::Connect(m) => format!("connect: {m}"),
            TransportError::Other(m) => format!("exception: {m}"),
            TransportError::FixtureMiss(k) => format!("exception: fixture miss {k}"),
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError>;

    /// Live transports are subject to backoff sleeps and rate limits.
    fn is_live(&self) -> bool {
        false
    }
}

/// Transport that refuses every request. Counts attempts so tests can assert
/// that nothing tried to reach the network.
#[derive(Debug, Default)]
pub struct DenyTransport {
    attempts: AtomicUsize,
}

impl DenyTransport {
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl Transport for DenyTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Connect(format!("network disabled: {}", req.key())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_backoff_ms: 500, timeout_secs: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Politeness {
    /// Maximum requests per second to a single host.
    pub requests_per_second: f64,
    /// Maximum concurrent in-flight requests to a single host.
    pub max_in_flight_per_host: usize,
}

impl Default for Politeness {
    fn default() -> Self {
        Self { requests_per_second: 5.0, max_in_flight_per_host: 4 }
    }
}

#[derive(Default)]
struct HostState {
    in_flight: usize,
    next_slot: Option<Instant>,
}

struct HostGate {
    policy: Politeness,
    hosts: Mutex<HashMap<String, HostState>>,
    freed: Condvar,
}

impl HostGate {
    /// Blocks until a slot for `host` is free and its rate allows a request.
    fn acquire(&self, host: &str) {
        let interval = if self.policy.requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / self.policy.requests_per_second)
        } else {
            Duration::ZERO
        };
        let wait_until = {
            let mut hosts = self.hosts.lock().expect("host gate lock");
            loop {
                let state = hosts.entry(host.to_owned()).or_default();
                if state.in_flight < self.policy.max_in_flight_per_host.max(1) {
                    break;
                }
                hosts = self.freed.wait(hosts).expect("host gate lock");
            }
            let state = hosts.get_mut(host).expect("entry inserted above");
            state.in_flight += 1;
            let now = Instant::now();
            let slot = state.next_slot.map_or(now, |s| s.max(now));
            state.next_slot = Some(slot + interval);
            slot
        };
        let now = Instant::now();
        if wait_until > now {
            std::thread::sleep(wait_until - now);
        }
    }

    fn release(&self, host: &str) {
        let mut hosts = self.hosts.lock().expect("host gate lock");
        if let Some(state) = hosts.get_mut(host) {
            state.in_flight = state.in_flight.saturating_sub(1);
        }
        self.freed.notify_all();
    }
}

/// Outcome of a fetch after retries.
#[derive(Debug, Clone, PartialEq)]
pub enum Fetched {
    Response(HttpResponse),
    Failed { error: TransportError, attempts: u32 },
}

/// Retry/politeness wrapper over a [`Transport`]. Successful responses are
/// memoized per request key for the lifetime of the client.
pub struct HttpClient {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    gate: HostGate,
    memo: Mutex<HashMap<String, HttpResponse>>,
    sent: AtomicUsize,
    clock: Arc<dyn Clock>,
}

impl HttpClient {
    pub fn new(transport: Arc<dyn Transport>, retry: RetryPolicy, politeness: Politeness, clock: Arc<dyn Clock>) -> Self {
        Self {
            transport,
            retry,
            gate: HostGate { policy: politeness, hosts: Mutex::new(HashMap::new()), freed: Condvar::new() },
            memo: Mutex::new(HashMap::new()),
            sent: AtomicUsize::new(0),
            clock,
        }
    }

    /// Number of requests handed to the transport, retries included.
    pub fn requests_sent(&self) -> usize {
        self.sent.load(Ordering::SeqCst)
    }

    pub fn is_live(&self) -> bool {
        self.transport.is_live()
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    fn send_once(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let live = self.transport.is_live();
        let host = req.host();
        if live {
            self.gate.acquire(&host);
        }
        self.sent.fetch_add(1, Ordering::SeqCst);
        let result = self.transport.send(req);
        if live {
            self.gate.release(&host);
        }
        result
    }

    /// Sends `req`, retrying transport errors and 5xx responses. Fixture
    /// misses are surfaced as errors and never retried.
    pub fn fetch(&self, req: &HttpRequest) -> Result<Fetched, ProbeError> {
        let key = req.key();
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(Fetched::Response(hit.clone()));
        }
        let attempts = self.retry.attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 && self.transport.is_live() {
                std::thread::sleep(Duration::from_millis(self.retry.base_backoff_ms.saturating_mul(1 << (attempt - 1))));
            }
            match self.send_once(req) {
                Err(TransportError::FixtureMiss(k)) => return Err(ProbeError::FixtureMiss(k)),
                Err(e) => last = Some(Fetched::Failed { error: e, attempts: attempt + 1 }),
                Ok(resp) if resp.status >= 500 => last = Some(Fetched::Response(resp)),
                Ok(resp) => {
                    self.memo.lock().expect("memo lock").insert(key, resp.clone());
                    return Ok(Fetched::Response(resp));
                }
            }
        }
        Ok(last.expect("at least one attempt"))
    }

    /// Like [`fetch`](Self::fetch) but follows redirects up to `max_depth`
    /// hops. Returns the final fetch result and the chain of URLs visited.
    pub fn fetch_following(&self, req: &HttpRequest, max_depth: usize) -> Result<(Fetched, Vec<String>), ProbeError> {
        let mut chain = vec![req.url.clone()];
        let mut current = req.clone();
        loop {
            let fetched = self.fetch(&current)?;
            let Fetched::Response(resp) = &fetched else {
                return Ok((fetched, chain));
            };
            if !resp.is_redirect() {
                return Ok((fetched, chain));
            }
            let Some(location) = resp.header("location") else {
                return Ok((fetched, chain));
            };
            if chain.len() > max_depth {
                let error = TransportError::Other(format!("redirect depth exceeded ({max_depth})"));
                return Ok((Fetched::Failed { error, attempts: 1 }, chain));
            }
            let next = Url::parse(&current.url)
                .and_then(|base| base.join(location))
                .map(|u| u.to_string())
                .unwrap_or_else(|_| location.to_owned());
            chain.push(next.clone());
            current = HttpRequest { url: next, ..current };
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::probe::FixedClock;

    /// Scripted transport: returns queued results per URL, then repeats the
    /// last one.
    pub(crate) struct Scripted {
        pub live: bool,
        pub script: Mutex<HashMap<String, Vec<Result<u16, TransportError>>>>,
        pub log: Mutex<Vec<(String, Instant)>>,
    }

    impl Scripted {
        pub fn new(live: bool, entries: &[(&str, Vec<Result<u16, TransportError>>)]) -> Self {
            let script = entries.iter().map(|(u, v)| (request_key("GET", u), v.clone())).collect();
            Self { live, script: Mutex::new(script), log: Mutex::new(Vec::new()) }
        }
    }

    impl Transport for Scripted {
        fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
            self.log.lock().unwrap().push((req.url.clone(), Instant::now()));
            let mut script = self.script.lock().unwrap();
            let queue = script.get_mut(&req.key()).ok_or_else(|| TransportError::FixtureMiss(req.key()))?;
            let next = if queue.len() > 1 { queue.remove(0) } else { queue[0].clone() };
            next.map(|status| HttpResponse { status, headers: BTreeMap::new(), body: String::new(), observed_at: DateTime::UNIX_EPOCH })
        }

        fn is_live(&self) -> bool {
            self.live
        }
    }

    fn client(t: Arc<dyn Transport>, politeness: Politeness) -> HttpClient {
        let retry = RetryPolicy { attempts: 3, base_backoff_ms: 1, timeout_secs: 1 };
        HttpClient::new(t, retry, politeness, Arc::new(FixedClock(DateTime::UNIX_EPOCH)))
    }

    #[test]
    fn retries_until_success() {
        let t = Arc::new(Scripted::new(false, &[("http://a.test/x", vec![Err(TransportError::Timeout), Ok(503), Ok(200)])]));
        let c = client(t.clone(), Politeness::default());
        let r = c.fetch(&HttpRequest::get("http://a.test/x")).unwrap();
        assert!(matches!(r, Fetched::Response(ref resp) if resp.status == 200));
        assert_eq!(c.requests_sent(), 3);
        // Memoized: no further transport calls.
        c.fetch(&HttpRequest::get("http://a.test/x")).unwrap();
        assert_eq!(c.requests_sent(), 3);
    }

    #[test]
    fn exhaustion_reports_attempts() {
        let t = Arc::new(Scripted::new(false, &[("http://a.test/x", vec![Err(TransportError::Connect("refused".into()))])]));
        let c = client(t, Politeness::default());
        match c.fetch(&HttpRequest::get("http://a.test/x")).unwrap() {
            Fetched::Failed { error, attempts } => {
                assert_eq!(attempts, 3);
                assert_eq!(error.class(), "connect");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fixture_miss_is_fatal() {
        let t = Arc::new(Scripted::new(false, &[]));
        let c = client(t, Politeness::default());
        assert!(matches!(c.fetch(&HttpRequest::get("http://nope.test/")), Err(ProbeError::FixtureMiss(_))));
    }

    #[test]
    fn live_requests_respect_rate_per_host() {
        let urls: Vec<String> = (0..5).map(|i| format!("http://rate.test/{i}")).collect();
        let entries: Vec<(&str, Vec<Result<u16, TransportError>>)> = urls.iter().map(|u| (u.as_str(), vec![Ok(200)])).collect();
        let t = Arc::new(Scripted::new(true, &entries));
        let c = Arc::new(client(t.clone(), Politeness { requests_per_second: 20.0, max_in_flight_per_host: 4 }));
        std::thread::scope(|s| {
            for u in &urls {
                let c = c.clone();
                s.spawn(move || c.fetch(&HttpRequest::get(u.clone())).unwrap());
            }
        });
        let mut times: Vec<Instant> = t.log.lock().unwrap().iter().map(|(_, at)| *at).collect();
        times.sort();
        for pair in times.windows(2) {
            // 20 rps -> 50ms spacing; allow scheduler jitter below.
            assert!(pair[1] - pair[0] >= Duration::from_millis(45), "{:?}", pair[1] - pair[0]);
        }
    }

    #[test]
    fn redirects_are_bounded() {
        struct Loop;
        impl Transport for Loop {
            fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
                let mut headers = BTreeMap::new();
                headers.insert("location".into(), format!("{}x", req.url));
                Ok(HttpResponse { status: 302, headers, body: String::new(), observed_at: DateTime::UNIX_EPOCH })
            }
        }
        let c = client(Arc::new(Loop), Politeness::default());
        let (fetched, chain) = c.fetch_following(&HttpRequest::get("http://loop.test/a"), 5).unwrap();
        assert!(matches!(fetched, Fetched::Failed { .. }));
        assert_eq!(chain.len(), 6);
    }
}
