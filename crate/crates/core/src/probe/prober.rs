use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use url::Url;

use super::{
    Availability, AvailabilityBackend, CachedValue, Clock, Endpoints, Fetched, HttpAvailability, HttpClient, HttpRequest,
    HttpResponse, Politeness, ProbeCache, ProbeError, ProbeOutcome, ProbeStatus, RefInventory, RefListing, RetryPolicy,
    Transport,
};
use crate::domain::domain_key;
use crate::extract::{PackageRef, Registry, UrlRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub endpoints: Endpoints,
    pub retry: RetryPolicy,
    pub politeness: Politeness,
    pub redirect_depth: usize,
    /// Upper bound on pages fetched per ref listing.
    pub max_pages: usize,
    #[serde(skip)]
    pub github_token: Option<String>,
    #[serde(skip)]
    pub availability_credential: Option<String>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            endpoints: Endpoints::default(),
            retry: RetryPolicy::default(),
            politeness: Politeness::default(),
            redirect_depth: 5,
            max_pages: 100,
            github_token: None,
            availability_credential: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeSource {
    Network,
    Fixture,
    Cache,
}

/// How a probe key was answered the first time it was asked in a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub key: String,
    pub source: ProbeSource,
    pub result: String,
}

/// Runs probes against a transport, through a cache.
pub struct Prober {
    client: Arc<HttpClient>,
    config: ProbeConfig,
    cache: Arc<ProbeCache>,
    availability: Arc<dyn AvailabilityBackend>,
    provenance: Mutex<BTreeMap<String, ProvenanceEntry>>,
}

fn endpoint(base: &str, segments: &[&str]) -> String {
    let mut url = Url::parse(base).unwrap_or_else(|_| Url::parse("http://invalid.invalid").expect("static URL"));
    if let Ok(mut path) = url.path_segments_mut() {
        path.pop_if_empty().extend(segments);
    }
    url.to_string()
}

fn describe(value: &CachedValue) -> String {
    match value {
        CachedValue::Outcome(o) => o.status.to_string(),
        CachedValue::Refs(RefListing::Inventory(i)) => format!("{} tags, {} branches", i.tags.len(), i.branches.len()),
        CachedValue::Refs(RefListing::Unavailable(o)) => o.status.to_string(),
        CachedValue::Availability(a) => format!("{a:?}").to_lowercase(),
    }
}

fn is_transient(value: &CachedValue) -> bool {
    match value {
        CachedValue::Outcome(o) | CachedValue::Refs(RefListing::Unavailable(o)) => o.status == ProbeStatus::Unreachable,
        CachedValue::Refs(RefListing::Inventory(_)) => false,
        CachedValue::Availability(a) => *a == Availability::Unknown,
    }
}

fn next_link(resp: &HttpResponse) -> Option<String> {
    resp.header("link")?.split(',').find_map(|part| {
        let (target, params) = part.split_once(';')?;
        params
            .split(';')
            .any(|p| p.trim().replace(' ', "") == "rel=\"next\"")
            .then(|| target.trim().trim_start_matches('<').trim_end_matches('>').to_owned())
    })
}

fn non_empty_mark(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::Bool(true) => Some(String::new()),
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_owned()),
        _ => None,
    }
}

impl Prober {
    pub fn new(transport: Arc<dyn Transport>, config: ProbeConfig, clock: Arc<dyn Clock>) -> Self {
        let client = Arc::new(HttpClient::new(transport, config.retry, config.politeness, clock));
        let availability =
            Arc::new(HttpAvailability::new(client.clone(), &config.endpoints.availability, config.availability_credential.clone()));
        Self { client, config, cache: Arc::new(ProbeCache::default()), availability, provenance: Mutex::new(BTreeMap::new()) }
    }

    pub fn with_cache(mut self, cache: Arc<ProbeCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_availability(mut self, backend: Arc<dyn AvailabilityBackend>) -> Self {
        self.availability = backend;
        self
    }

    pub fn client(&self) -> &Arc<HttpClient> {
        &self.client
    }

    pub fn cache(&self) -> &Arc<ProbeCache> {
        &self.cache
    }

    pub fn config(&self) -> &ProbeConfig {
        &self.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.client.clock().now()
    }

    /// First answer per probe key, ordered by key.
    pub fn provenance(&self) -> Vec<ProvenanceEntry> {
        self.provenance.lock().expect("provenance lock").values().cloned().collect()
    }

    fn note(&self, key: &str, source: ProbeSource, value: &CachedValue) {
        self.provenance
            .lock()
            .expect("provenance lock")
            .entry(key.to_owned())
            .or_insert_with(|| ProvenanceEntry { key: key.to_owned(), source, result: describe(value) });
    }

    fn cached(&self, key: &str, compute: impl FnOnce() -> Result<CachedValue, ProbeError>) -> Result<CachedValue, ProbeError> {
        let now = self.now();
        if let Some(hit) = self.cache.get(key, now) {
            self.note(key, ProbeSource::Cache, &hit);
            return Ok(hit);
        }
        let value = compute()?;
        if is_transient(&value) {
            self.cache.put_session(key, value.clone(), now);
        } else {
            self.cache.put(key, value.clone(), now);
        }
        let source = if self.client.is_live() { ProbeSource::Network } else { ProbeSource::Fixture };
        self.note(key, source, &value);
        Ok(value)
    }

    fn outcome(&self, key: &str, compute: impl FnOnce() -> Result<ProbeOutcome, ProbeError>) -> Result<ProbeOutcome, ProbeError> {
        match self.cached(key, || compute().map(CachedValue::Outcome))? {
            CachedValue::Outcome(o) => Ok(o),
            other => unreachable!("cache key {key} holds {other:?}"),
        }
    }

    fn failure(&self, error: &super::TransportError, attempts: u32) -> ProbeOutcome {
        ProbeOutcome::unreachable(self.now(), format!("exception: {}; exceeded max retries ({attempts})", error.class()))
    }

    /// Status mapping for JSON APIs (registries, GitHub).
    fn api_outcome(&self, fetched: &Fetched) -> ProbeOutcome {
        let resp = match fetched {
            Fetched::Failed { error, attempts } => return self.failure(error, *attempts),
            Fetched::Response(r) => r,
        };
        let at = resp.observed_at;
        match resp.status {
            200..=299 => ProbeOutcome::exists(resp.status, at, format!("http {}", resp.status)),
            404 | 410 => ProbeOutcome::not_found(Some(resp.status), at, format!("http {}", resp.status)),
            _ if resp.is_rate_limited() => {
                let after = resp.retry_after().unwrap_or_else(|| "unknown".into());
                ProbeOutcome::unreachable(at, format!("rate-limited; retry-after={after}"))
            }
            500.. => ProbeOutcome::unreachable(at, format!("exception: http {}; exceeded max retries ({})", resp.status, self.config.retry.attempts)),
            code => ProbeOutcome::unreachable(at, format!("exception: http {code}")),
        }
    }

    fn github_request(&self, url: String) -> HttpRequest {
        let mut req = HttpRequest::get(url).header("accept", "application/vnd.github+json");
        if let Some(token) = &self.config.github_token {
            req = req.header("authorization", format!("Bearer {token}"));
        }
        req
    }

    pub fn package_url(&self, registry: Registry, name: &str) -> String {
        let e = &self.config.endpoints;
        match registry {
            Registry::Npm => endpoint(&e.npm, &[name]),
            Registry::PyPI => endpoint(&e.pypi, &["pypi", name, "json"]),
            Registry::Packagist => {
                let (vendor, pkg) = name.split_once('/').unwrap_or(("", name));
                endpoint(&e.packagist, &["packages", vendor, &format!("{pkg}.json")])
            }
            Registry::RubyGems => endpoint(&e.rubygems, &["api", "v1", "gems", &format!("{name}.json")]),
            // Distribution names use dashes, module names use `::`.
            Registry::Cpan if name.contains('-') && !name.contains("::") => endpoint(&e.metacpan, &["v1", "release", name]),
            Registry::Cpan => endpoint(&e.metacpan, &["v1", "module", name]),
        }
    }

    /// Existence of a package. An incomplete Packagist name is answered
    /// without a request.
    pub fn probe_package(&self, r: &PackageRef) -> Result<ProbeOutcome, ProbeError> {
        if r.registry == Registry::Packagist && !r.complete {
            return Ok(ProbeOutcome::incomplete(self.now(), "incomplete-name: expected vendor/package"));
        }
        let key = format!("pkg:{}/{}", r.registry, r.name);
        self.outcome(&key, || {
            let fetched = self.client.fetch(&HttpRequest::get(self.package_url(r.registry, &r.name)))?;
            Ok(self.api_outcome(&fetched))
        })
    }

    /// Deprecation/abandonment mark of an existing package. Only npm,
    /// Packagist and CPAN expose one.
    pub fn probe_deprecation(&self, r: &PackageRef) -> Result<ProbeOutcome, ProbeError> {
        if !r.registry.has_deprecation_mark() {
            return Err(ProbeError::Unsupported(format!("deprecation probing is unsupported for {}", r.registry.display_name())));
        }
        if !r.complete {
            return Ok(ProbeOutcome::incomplete(self.now(), "incomplete-name: expected vendor/package"));
        }
        let key = format!("deprecation:{}/{}", r.registry, r.name);
        self.outcome(&key, || {
            let fetched = self.client.fetch(&HttpRequest::get(self.package_url(r.registry, &r.name)))?;
            let base = self.api_outcome(&fetched);
            let Fetched::Response(resp) = &fetched else { return Ok(base) };
            if base.status != ProbeStatus::Exists {
                return Ok(base);
            }
            let (code, at) = (Some(resp.status), resp.observed_at);
            let Some(meta) = resp.json() else {
                return Ok(ProbeOutcome::unreachable(at, "exception: registry metadata is not JSON"));
            };
            let mark = match r.registry {
                Registry::Npm => npm_deprecation(&meta),
                Registry::Packagist => {
                    non_empty_mark(meta.pointer("/package/abandoned")).map(|m| if m.is_empty() { "abandoned".into() } else { format!("abandoned; use {m}") })
                }
                Registry::Cpan => non_empty_mark(meta.get("deprecated")).map(|_| "deprecated".to_owned()),
                Registry::PyPI | Registry::RubyGems => None,
            };
            Ok(match mark {
                Some(evidence) => ProbeOutcome::deprecated(code, at, evidence),
                None => ProbeOutcome::exists(resp.status, at, "no deprecation mark"),
            })
        })
    }

    /// Direct request to a URL, following redirects up to the configured
    /// depth. `Redirected` is reported when the final registrable domain
    /// differs from the original one.
    pub fn probe_url(&self, u: &UrlRef) -> Result<ProbeOutcome, ProbeError> {
        self.probe_url_str(&u.url)
    }

    pub fn probe_url_str(&self, url: &str) -> Result<ProbeOutcome, ProbeError> {
        let key = format!("url:{url}");
        self.outcome(&key, || {
            let (fetched, chain) = self.client.fetch_following(&HttpRequest::get(url).status_only(), self.config.redirect_depth)?;
            let resp = match &fetched {
                Fetched::Failed { error, attempts } => return Ok(self.failure(error, *attempts)),
                Fetched::Response(r) => r,
            };
            let host = |s: &str| Url::parse(s).ok().and_then(|u| u.host_str().map(domain_key));
            let last = chain.last().expect("chain starts with the request URL");
            let moved = chain.len() > 1 && host(url) != host(last);
            let (code, at) = (resp.status, resp.observed_at);
            let via = if chain.len() > 1 { format!(" after {} redirect(s)", chain.len() - 1) } else { String::new() };
            Ok(match code {
                404 | 410 => ProbeOutcome::not_found(Some(code), at, format!("http {code}{via}")),
                429 | 500.. => ProbeOutcome::unreachable(at, format!("exception: http {code}; exceeded max retries ({})", self.config.retry.attempts)),
                _ if moved => ProbeOutcome::redirected(last.clone(), Some(code), at, format!("http {code}{via}")),
                _ => ProbeOutcome::exists(code, at, format!("http {code}{via}")),
            })
        })
    }

    /// Whether a registrable domain can be bought; `Unknown` on backend
    /// failure.
    pub fn probe_domain_availability(&self, domain: &str) -> Result<Availability, ProbeError> {
        let key = format!("domain:{}", domain.to_ascii_lowercase());
        match self.cached(&key, || self.availability.check(domain).map(CachedValue::Availability))? {
            CachedValue::Availability(a) => Ok(a),
            other => unreachable!("cache key {key} holds {other:?}"),
        }
    }

    pub fn probe_github_account(&self, account: &str) -> Result<ProbeOutcome, ProbeError> {
        let key = format!("account:{}", account.to_ascii_lowercase());
        self.outcome(&key, || {
            let url = endpoint(&self.config.endpoints.github_api, &["users", account]);
            Ok(self.api_outcome(&self.client.fetch(&self.github_request(url))?))
        })
    }

    /// Repository status. A moved repository (301 from the API, or a
    /// different canonical `full_name`) is `Redirected` to `owner/repo`.
    pub fn probe_repo(&self, owner: &str, repo: &str) -> Result<ProbeOutcome, ProbeError> {
        let key = format!("repo:{}/{}", owner.to_ascii_lowercase(), repo.to_ascii_lowercase());
        self.outcome(&key, || {
            let url = endpoint(&self.config.endpoints.github_api, &["repos", owner, repo]);
            let (fetched, chain) = self.client.fetch_following(&self.github_request(url), self.config.redirect_depth)?;
            let base = self.api_outcome(&fetched);
            let Fetched::Response(resp) = &fetched else { return Ok(base) };
            if base.status != ProbeStatus::Exists {
                return Ok(base);
            }
            let full_name = resp.json().and_then(|v| v.get("full_name").and_then(Value::as_str).map(str::to_owned));
            let requested = format!("{owner}/{repo}");
            let target = match full_name {
                Some(f) if !f.eq_ignore_ascii_case(&requested) => Some(f),
                Some(_) => None,
                None if chain.len() > 1 => repo_from_api_url(chain.last().expect("non-empty chain")),
                None => None,
            };
            Ok(match target {
                Some(t) => ProbeOutcome::redirected(t.clone(), Some(resp.status), resp.observed_at, format!("moved to {t}")),
                None if chain.len() > 1 => ProbeOutcome::exists(resp.status, resp.observed_at, "http 200 after redirect to same name"),
                None => base,
            })
        })
    }

    /// All tag and branch names, following pagination.
    pub fn list_refs(&self, owner: &str, repo: &str) -> Result<RefListing, ProbeError> {
        let key = format!("refs:{}/{}", owner.to_ascii_lowercase(), repo.to_ascii_lowercase());
        let value = self.cached(&key, || {
            let mut inv = RefInventory { owner: owner.to_owned(), repo: repo.to_owned(), ..Default::default() };
            for (kind, set) in [("tags", &mut inv.tags), ("branches", &mut inv.branches)] {
                let mut url = Some(format!("{}?per_page=100", endpoint(&self.config.endpoints.github_api, &["repos", owner, repo, kind])));
                let mut pages = 0;
                while let Some(u) = url.take() {
                    pages += 1;
                    if pages > self.config.max_pages {
                        tracing::warn!(owner, repo, kind, "ref listing truncated at {} pages", self.config.max_pages);
                        break;
                    }
                    let (fetched, _) = self.client.fetch_following(&self.github_request(u), self.config.redirect_depth)?;
                    let outcome = self.api_outcome(&fetched);
                    let Fetched::Response(resp) = &fetched else { return Ok(CachedValue::Refs(RefListing::Unavailable(outcome))) };
                    if outcome.status != ProbeStatus::Exists {
                        return Ok(CachedValue::Refs(RefListing::Unavailable(outcome)));
                    }
                    let Some(Value::Array(items)) = resp.json() else {
                        let bad = ProbeOutcome::unreachable(resp.observed_at, format!("exception: {kind} listing is not a JSON array"));
                        return Ok(CachedValue::Refs(RefListing::Unavailable(bad)));
                    };
                    set.extend(items.iter().filter_map(|i| i.get("name").and_then(Value::as_str)).map(str::to_owned));
                    url = next_link(resp);
                }
            }
            Ok(CachedValue::Refs(RefListing::Inventory(inv)))
        })?;
        match value {
            CachedValue::Refs(r) => Ok(r),
            other => unreachable!("cache key {key} holds {other:?}"),
        }
    }
}

fn repo_from_api_url(url: &str) -> Option<String> {
    let u = Url::parse(url).ok()?;
    let segs: Vec<&str> = u.path_segments()?.collect();
    let i = segs.iter().position(|s| *s == "repos")?;
    Some(format!("{}/{}", segs.get(i + 1)?, segs.get(i + 2)?))
}

fn npm_deprecation(meta: &Value) -> Option<String> {
    let versions = meta.get("versions").and_then(Value::as_object);
    if versions.is_none_or(|v| v.is_empty()) {
        return Some("unpublished".into());
    }
    let versions = versions.expect("checked above");
    let message = |v: &Value| non_empty_mark(v.get("deprecated"));
    match meta.pointer("/dist-tags/latest").and_then(Value::as_str).and_then(|l| versions.get(l)) {
        Some(latest) => message(latest).map(|m| format!("deprecated: {m}")),
        None => {
            let all: Option<Vec<String>> = versions.values().map(message).collect();
            all.and_then(|msgs| msgs.into_iter().next()).map(|m| format!("deprecated: {m}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{Span, UrlKind};
    use crate::probe::{FixedClock, FixtureArchive, ReplayTransport, StaticAvailability, TransportError};
    use serde_json::json;

    const NPM: &str = "https://registry.npmjs.org";
    const GH: &str = "https://api.github.com";

    fn t0() -> DateTime<Utc> {
        "2025-03-01T00:00:00Z".parse().unwrap()
    }

    fn prober(archive: FixtureArchive) -> Prober {
        Prober::new(Arc::new(ReplayTransport::new(archive)), ProbeConfig::default(), Arc::new(FixedClock(t0())))
    }

    fn pkg(reg: Registry, name: &str) -> PackageRef {
        PackageRef::new(reg, name, None, Span::new(0, 0))
    }

    fn url_ref(u: &str) -> UrlRef {
        let host = Url::parse(u).unwrap().host_str().unwrap().to_owned();
        UrlRef { url: u.into(), domain: domain_key(&host), host, registrable: true, kind: UrlKind::Other, version_hint: None, origin: Span::new(0, 0) }
    }

    #[test]
    fn package_existence() {
        let mut a = FixtureArchive::new(t0());
        a.respond_json(&format!("{NPM}/left-pad"), 200, &json!({"name": "left-pad"}));
        a.respond(&format!("{NPM}/totally-made-up-pkg"), 404, "{\"error\":\"Not found\"}");
        let p = prober(a);
        let ok = p.probe_package(&pkg(Registry::Npm, "left-pad")).unwrap();
        assert_eq!((ok.status, ok.http_code), (ProbeStatus::Exists, Some(200)));
        let missing = p.probe_package(&pkg(Registry::Npm, "totally-made-up-pkg")).unwrap();
        assert_eq!((missing.status, missing.http_code), (ProbeStatus::NotFound, Some(404)));
        assert!(ok.is_well_formed() && missing.is_well_formed());
    }

    #[test]
    fn incomplete_packagist_name_issues_no_request() {
        let p = prober(FixtureArchive::new(t0()));
        let o = p.probe_package(&pkg(Registry::Packagist, "monolog")).unwrap();
        assert_eq!(o.status, ProbeStatus::Incomplete);
        assert_eq!(p.client().requests_sent(), 0);
    }

    #[test]
    fn endpoint_shapes() {
        let p = prober(FixtureArchive::new(t0()));
        assert_eq!(p.package_url(Registry::Npm, "@types/node"), "https://registry.npmjs.org/@types%2Fnode");
        assert_eq!(p.package_url(Registry::PyPI, "requests"), "https://pypi.org/pypi/requests/json");
        assert_eq!(p.package_url(Registry::Packagist, "monolog/monolog"), "https://packagist.org/packages/monolog/monolog.json");
        assert_eq!(p.package_url(Registry::RubyGems, "rails"), "https://rubygems.org/api/v1/gems/rails.json");
        assert_eq!(p.package_url(Registry::Cpan, "Mojo::UserAgent"), "https://fastapi.metacpan.org/v1/module/Mojo::UserAgent");
        assert_eq!(p.package_url(Registry::Cpan, "libwww-perl"), "https://fastapi.metacpan.org/v1/release/libwww-perl");
    }

    #[test]
    fn deprecation_marks() {
        let mut a = FixtureArchive::new(t0());
        a.respond_json(&format!("{NPM}/request"), 200, &json!({"dist-tags": {"latest": "2.88.2"}, "versions": {"2.88.2": {"deprecated": "request has been deprecated"}}}));
        a.respond_json(&format!("{NPM}/express"), 200, &json!({"dist-tags": {"latest": "4.0.0"}, "versions": {"4.0.0": {}}}));
        a.respond_json(&format!("{NPM}/gone"), 200, &json!({"name": "gone", "time": {"unpublished": {}}, "versions": {}}));
        a.respond_json("https://packagist.org/packages/old/lib.json", 200, &json!({"package": {"abandoned": "new/lib"}}));
        a.respond_json("https://fastapi.metacpan.org/v1/module/Old::Mod", 200, &json!({"deprecated": true}));
        let p = prober(a);
        assert_eq!(p.probe_deprecation(&pkg(Registry::Npm, "request")).unwrap().status, ProbeStatus::Deprecated);
        assert_eq!(p.probe_deprecation(&pkg(Registry::Npm, "express")).unwrap().status, ProbeStatus::Exists);
        let gone = p.probe_deprecation(&pkg(Registry::Npm, "gone")).unwrap();
        assert_eq!((gone.status, gone.evidence.as_str()), (ProbeStatus::Deprecated, "unpublished"));
        let abandoned = p.probe_deprecation(&pkg(Registry::Packagist, "old/lib")).unwrap();
        assert_eq!(abandoned.status, ProbeStatus::Deprecated);
        assert!(abandoned.evidence.contains("new/lib"));
        assert_eq!(p.probe_deprecation(&pkg(Registry::Cpan, "Old::Mod")).unwrap().status, ProbeStatus::Deprecated);
        assert!(matches!(p.probe_deprecation(&pkg(Registry::PyPI, "x")), Err(ProbeError::Unsupported(_))));
    }

    #[test]
    fn url_statuses() {
        let mut a = FixtureArchive::new(t0());
        a.respond("https://ok.example.com/a.js", 200, "");
        a.respond("https://ok.example.com/missing.js", 404, "");
        a.fail("https://camanjs.com/caman.js", TransportError::Connect("refused".into()));
        a.respond_with_headers("https://old.example.org/x", 301, &[("location", "https://www.example.org/x")], "");
        a.respond("https://www.example.org/x", 200, "");
        a.respond_with_headers("https://moved.example.net/x", 302, &[("location", "https://elsewhere.example.com/y")], "");
        a.respond("https://elsewhere.example.com/y", 200, "");
        let p = prober(a);
        assert_eq!(p.probe_url(&url_ref("https://ok.example.com/a.js")).unwrap().status, ProbeStatus::Exists);
        assert_eq!(p.probe_url(&url_ref("https://ok.example.com/missing.js")).unwrap().status, ProbeStatus::NotFound);
        let down = p.probe_url(&url_ref("https://camanjs.com/caman.js")).unwrap();
        assert_eq!(down.status, ProbeStatus::Unreachable);
        assert!(down.evidence.starts_with("exception") && down.evidence.contains("(3)"));
        assert!(down.is_well_formed());
        // Same registrable domain: not a redirect finding.
        let same = p.probe_url(&url_ref("https://old.example.org/x")).unwrap();
        assert_eq!((same.status, same.http_code), (ProbeStatus::Exists, Some(200)));
        let moved = p.probe_url(&url_ref("https://moved.example.net/x")).unwrap();
        assert_eq!(moved.status, ProbeStatus::Redirected);
        assert_eq!(moved.redirect_target.as_deref(), Some("https://elsewhere.example.com/y"));
    }

    #[test]
    fn github_accounts_and_repos() {
        let mut a = FixtureArchive::new(t0());
        a.respond_json(&format!("{GH}/users/actions"), 200, &json!({"login": "actions"}));
        a.respond(&format!("{GH}/users/gradle-php"), 404, "");
        a.respond_with_headers(&format!("{GH}/users/busy"), 403, &[("x-ratelimit-remaining", "0"), ("retry-after", "60")], "");
        a.respond_with_headers(&format!("{GH}/repos/old-org/tool"), 301, &[("location", &format!("{GH}/repositories/42"))], "");
        a.respond_json(&format!("{GH}/repositories/42"), 200, &json!({"full_name": "new-org/tool"}));
        a.respond_json(&format!("{GH}/repos/actions/checkout"), 200, &json!({"full_name": "actions/checkout"}));
        a.respond(&format!("{GH}/repos/nobody/nothing"), 404, "");
        let p = prober(a);
        assert_eq!(p.probe_github_account("actions").unwrap().status, ProbeStatus::Exists);
        assert_eq!(p.probe_github_account("gradle-php").unwrap().status, ProbeStatus::NotFound);
        let limited = p.probe_github_account("busy").unwrap();
        assert_eq!(limited.status, ProbeStatus::Unreachable);
        assert!(limited.evidence.contains("retry-after=60"));
        let moved = p.probe_repo("old-org", "tool").unwrap();
        assert_eq!((moved.status, moved.redirect_target.as_deref()), (ProbeStatus::Redirected, Some("new-org/tool")));
        assert_eq!(p.probe_repo("actions", "checkout").unwrap().status, ProbeStatus::Exists);
        assert_eq!(p.probe_repo("nobody", "nothing").unwrap().status, ProbeStatus::NotFound);
    }

    #[test]
    fn ref_listing_paginates() {
        let mut a = FixtureArchive::new(t0());
        let tags = format!("{GH}/repos/microsoft/setup-msbuild/tags?per_page=100");
        let tags2 = format!("{GH}/repos/microsoft/setup-msbuild/tags?per_page=100&page=2");
        a.respond_with_headers(&tags, 200, &[("link", &format!("<{tags2}>; rel=\"next\", <{tags2}>; rel=\"last\""))], json!([{"name": "v1"}, {"name": "v1.0.1"}]).to_string());
        a.respond_with_headers(&tags2, 200, &[("link", &format!("<{tags}>; rel=\"prev\""))], json!([{"name": "v2"}]).to_string());
        a.respond_json(&format!("{GH}/repos/microsoft/setup-msbuild/branches?per_page=100"), 200, &json!([{"name": "main"}, {"name": "v1.0.1"}]));
        a.respond_json(&format!("{GH}/repos/e/empty/tags?per_page=100"), 200, &json!([]));
        a.respond_json(&format!("{GH}/repos/e/empty/branches?per_page=100"), 200, &json!([]));
        let p = prober(a);
        let RefListing::Inventory(inv) = p.list_refs("microsoft", "setup-msbuild").unwrap() else { panic!() };
        assert_eq!(inv.tags.iter().map(String::as_str).collect::<Vec<_>>(), ["v1", "v1.0.1", "v2"]);
        assert!(inv.tags.contains("v1.0.1") && inv.branches.contains("v1.0.1"));
        let RefListing::Inventory(empty) = p.list_refs("e", "empty").unwrap() else { panic!() };
        assert!(empty.tags.is_empty() && empty.branches.is_empty());
    }

    #[test]
    fn availability_backends() {
        let mut a = FixtureArchive::new(t0());
        a.respond_json("https://api.godaddy.com/v1/domains/available?domain=camanjs.com", 200, &json!({"available": true}));
        a.respond_json("https://api.godaddy.com/v1/domains/available?domain=example.com", 200, &json!({"available": false}));
        a.fail("https://api.godaddy.com/v1/domains/available?domain=slow.com", TransportError::Timeout);
        let p = prober(a);
        assert_eq!(p.probe_domain_availability("camanjs.com").unwrap(), Availability::Available);
        assert_eq!(p.probe_domain_availability("example.com").unwrap(), Availability::Taken);
        assert_eq!(p.probe_domain_availability("slow.com").unwrap(), Availability::Unknown);
        let s = prober(FixtureArchive::new(t0())).with_availability(Arc::new(StaticAvailability::default().with("camanjs.com", Availability::Available)));
        assert_eq!(s.probe_domain_availability("camanjs.com").unwrap(), Availability::Available);
        assert_eq!(s.probe_domain_availability("other.com").unwrap(), Availability::Unknown);
    }

    #[test]
    fn cache_hit_issues_no_request() {
        let mut a = FixtureArchive::new(t0());
        a.respond_json(&format!("{NPM}/left-pad"), 200, &json!({}));
        let cache = Arc::new(ProbeCache::default());
        let first = prober(a.clone()).with_cache(cache.clone());
        let o1 = first.probe_package(&pkg(Registry::Npm, "left-pad")).unwrap();
        let second = prober(a).with_cache(cache);
        let o2 = second.probe_package(&pkg(Registry::Npm, "left-pad")).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(second.client().requests_sent(), 0);
        assert_eq!(second.provenance()[0].source, ProbeSource::Cache);
    }

    #[test]
    fn fixture_miss_propagates() {
        let p = prober(FixtureArchive::new(t0()));
        assert!(matches!(p.probe_package(&pkg(Registry::Npm, "x")), Err(ProbeError::FixtureMiss(_))));
    }
}
