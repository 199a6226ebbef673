use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::extract::CdnHost;
use crate::probe::ProbeConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config: {0} must be positive")]
    NotPositive(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub enabled: bool,
    pub ttl_hours: u64,
    /// Overrides `SENTINEL_CACHE_DIR` and the platform cache directory.
    pub dir: Option<PathBuf>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self { enabled: true, ttl_hours: crate::probe::DEFAULT_TTL_HOURS as u64, dir: None }
    }
}

/// Scanner configuration, read from TOML. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// CDN hosts added to the built-in set.
    pub cdn_hosts: Vec<CdnHost>,
    pub ci_catalog: Option<PathBuf>,
    /// External workflow analyzer command; its last argument is the workflow file.
    pub ci_analyzer: Option<Vec<String>>,
    pub vulndb: Option<PathBuf>,
    /// Responses assessed concurrently.
    pub concurrency: usize,
    pub probe: ProbeConfig,
    pub cache: CacheConfig,
    /// Replay probes from this fixture archive; no live traffic.
    pub fixture: Option<PathBuf>,
    /// Count each component once per response (`false`: count occurrences).
    pub dedup: bool,
    pub count_incomplete: bool,
    /// Component labels to break rates down by, besides the overall rows.
    pub group_by: Vec<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            cdn_hosts: Vec::new(),
            ci_catalog: None,
            ci_analyzer: None,
            vulndb: None,
            concurrency: 8,
            probe: ProbeConfig::default(),
            cache: CacheConfig::default(),
            fixture: None,
            dedup: true,
            count_incomplete: true,
            group_by: vec!["ecosystem".into(), "model".into(), "prompt_set".into()],
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_owned(), e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.probe;
        let checks: [(&'static str, bool); 8] = [
            ("concurrency", self.concurrency > 0),
            ("probe.retry.attempts", p.retry.attempts > 0),
            ("probe.retry.timeout_secs", p.retry.timeout_secs > 0),
            ("probe.politeness.requests_per_second", p.politeness.requests_per_second > 0.0),
            ("probe.politeness.max_in_flight_per_host", p.politeness.max_in_flight_per_host > 0),
            ("probe.redirect_depth", p.redirect_depth > 0),
            ("probe.max_pages", p.max_pages > 0),
            ("cache.ttl_hours", self.cache.ttl_hours > 0),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(ConfigError::NotPositive(name)),
            None => Ok(()),
        }
    }

    /// `cache.dir`, else `SENTINEL_CACHE_DIR`, else `$XDG_CACHE_HOME/sentinel`,
    /// else `~/.cache/sentinel`.
    pub fn cache_dir(&self) -> PathBuf {
        if let Some(d) = &self.cache.dir {
            return d.clone();
        }
        if let Some(d) = std::env::var_os("SENTINEL_CACHE_DIR") {
            return PathBuf::from(d);
        }
        if let Some(d) = std::env::var_os("XDG_CACHE_HOME") {
            return PathBuf::from(d).join("sentinel");
        }
        match std::env::var_os("HOME") {
            Some(h) => PathBuf::from(h).join(".cache").join("sentinel"),
            None => std::env::temp_dir().join("sentinel-cache"),
        }
    }

    /// Where `vulndb update` stores the snapshot: the configured path, or the
    /// cache directory.
    pub fn vulndb_path(&self) -> PathBuf {
        self.vulndb.clone().unwrap_or_else(|| self.cache_dir().join("jsrepository.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        let c = Config::from_toml(
            "concurrency = 2\ndedup = false\n[probe.retry]\nattempts = 5\nbase_backoff_ms = 10\ntimeout_secs = 3\n[[cdn_hosts]]\nhost = \"cdn.example.org\"\n",
        )
        .unwrap();
        assert_eq!((c.concurrency, c.dedup, c.probe.retry.attempts), (2, false, 5));
        assert_eq!(c.cdn_hosts[0].host, "cdn.example.org");
    }

    #[test]
    fn limits_must_be_positive() {
        assert!(matches!(Config::from_toml("concurrency = 0"), Err(ConfigError::NotPositive("concurrency"))));
        assert!(Config::from_toml("[cache]\nttl_hours = 0").is_err());
        assert!(Config::from_toml("bogus = 1").is_err());
    }
}
