//! Real-world status of components: registry APIs, the GitHub API, plain
//! HTTP and domain availability, behind a transport that can be live or a
//! replayed fixture archive.

mod availability;
mod cache;
mod fixture;
mod http;
mod live;
mod prober;

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use availability::{AvailabilityBackend, HttpAvailability, StaticAvailability};
pub use cache::{CacheError, CachedValue, ProbeCache, DEFAULT_TTL_HOURS};
pub use fixture::{record_file_name, FixtureArchive, FixtureError, FixtureRecord, RecordedResponse, RecordingTransport, ReplayTransport};
pub use http::{
    request_key, DenyTransport, Fetched, HttpClient, HttpRequest, HttpResponse, Politeness, RetryPolicy, Transport, TransportError,
};
pub use live::LiveTransport;
pub use prober::{ProbeConfig, ProbeSource, Prober, ProvenanceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeStatus {
    Exists,
    NotFound,
    Unreachable,
    Redirected,
    Deprecated,
    Incomplete,
}

impl fmt::Display for ProbeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeStatus::Exists => "exists",
            ProbeStatus::NotFound => "not-found",
            ProbeStatus::Unreachable => "unreachable",
            ProbeStatus::Redirected => "redirected",
            ProbeStatus::Deprecated => "deprecated",
            ProbeStatus::Incomplete => "incomplete",
        })
    }
}

/// Observed status of one component. Build through the constructors, which
/// keep the per-status invariants (a redirect has a target, an unreachable
/// outcome has no HTTP code).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub status: ProbeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http_code: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redirect_target: Option<String>,
    pub checked_at: DateTime<Utc>,
    pub evidence: String,
}

impl ProbeOutcome {
    fn make(status: ProbeStatus, http_code: Option<u16>, redirect_target: Option<String>, at: DateTime<Utc>, evidence: impl Into<String>) -> Self {
        Self { status, http_code, redirect_target, checked_at: at, evidence: evidence.into() }
    }

    pub fn exists(code: u16, at: DateTime<Utc>, evidence: impl Into<String>) -> Self {
        Self::make(ProbeStatus::Exists, Some(code), None, at, evidence)
    }

    /// `code` is `None` for an API-level not-found.
    pub fn not_found(code: Option<u16>, at: DateTime<Utc>, evidence: impl Into<String>) -> Self {
        Self::make(ProbeStatus::NotFound, code, None, at, evidence)
    }

    pub fn unreachable(at: DateTime<Utc>, evidence: impl Into<String>) -> Self {
        Self::make(ProbeStatus::Unreachable, None, None, at, evidence)
    }

    pub fn redirected(target: impl Into<String>, code: Option<u16>, at: DateTime<Utc>, evidence: impl Into<String>) -> Self {
        Self::make(ProbeStatus::Redirected, code, Some(target.into()), at, evidence)
    }

    pub fn deprecated(code: Option<u16>, at: DateTime<Utc>, evidence: impl Into<String>) -> Self {
        Self::make(ProbeStatus::Deprecated, code, None, at, evidence)
    }

    pub fn incomplete(at: DateTime<Utc>, evidence: impl Into<String>) -> Self {
        Self::make(ProbeStatus::Incomplete, None, None, at, evidence)
    }

    /// Checks the per-status invariants.
    pub fn is_well_formed(&self) -> bool {
        match self.status {
            ProbeStatus::Redirected => self.redirect_target.is_some(),
            ProbeStatus::Unreachable => self.http_code.is_none() && !self.evidence.is_empty(),
            ProbeStatus::NotFound => self.http_code.is_none_or(|c| c == 404 || c == 410),
            _ => true,
        }
    }
}

/// Tag and branch names of a repository, compared byte-exact. A name may be
/// in both sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefInventory {
    pub owner: String,
    pub repo: String,
    pub tags: BTreeSet<String>,
    pub branches: BTreeSet<String>,
}

/// Result of listing refs: the inventory, or why it could not be fetched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefListing {
    Inventory(RefInventory),
    Unavailable(ProbeOutcome),
}

/// Domain availability. `Unknown` covers backend errors and is never
/// collapsed into `Taken`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Availability {
    Available,
    Taken,
    Unknown,
}

impl Availability {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Availability::Available => Some(true),
            Availability::Taken => Some(false),
            Availability::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProbeError {
    #[error("fixture miss: no record for request '{0}'")]
    FixtureMiss(String),
    #[error("{0}")]
    Unsupported(String),
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Clock frozen at one instant; replayed sessions use the archive's
/// creation time so their output does not depend on when they run.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

/// Base URLs of every service a probe talks to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Endpoints {
    pub npm: String,
    pub pypi: String,
    pub packagist: String,
    pub rubygems: String,
    pub metacpan: String,
    pub github_api: String,
    pub availability: String,
}

impl Default for Endpoints {
    fn default() -> Self {
        Self {
            npm: "https://registry.npmjs.org".into(),
            pypi: "https://pypi.org".into(),
            packagist: "https://packagist.org".into(),
            rubygems: "https://rubygems.org".into(),
            metacpan: "https://fastapi.metacpan.org".into(),
            github_api: "https://api.github.com".into(),
            availability: "https://api.godaddy.com".into(),
        }
    }
}

impl Endpoints {
    /// Points every endpoint at one base URL (hermetic test servers).
    pub fn all_at(base: &str) -> Self {
        let b = base.trim_end_matches('/').to_owned();
        Self {
            npm: b.clone(),
            pypi: b.clone(),
            packagist: b.clone(),
            rubygems: b.clone(),
            metacpan: b.clone(),
            github_api: b.clone(),
            availability: b,
        }
    }
}
