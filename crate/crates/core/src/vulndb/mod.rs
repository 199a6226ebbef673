//! Client-side library vulnerability database in the retire.js repository
//! format, plus detection of library/version pairs in URLs.

mod version;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::extract::{CdnPackageRef, UrlRef};

pub use version::{compare, Version, VersionError};

/// Snapshot shipped with the crate.
pub const BUNDLED_SNAPSHOT: &str = include_str!("../../data/jsrepository.json");

/// Expansion of the `§§version§§` placeholder in retire.js extractors.
const VERSION_PATTERN: &str = r"[0-9][0-9.a-z_\-]+";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryAdvisory {
    pub library: String,
    /// Exclusive upper bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub below: Option<Version>,
    /// Inclusive lower bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_or_above: Option<Version>,
    pub severity: Severity,
    pub identifiers: Vec<String>,
    #[serde(default)]
    pub summary: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub info: Vec<String>,
}

impl LibraryAdvisory {
    pub fn affects(&self, v: &Version) -> bool {
        self.at_or_above.as_ref().is_none_or(|lo| v >= lo) && self.below.as_ref().is_none_or(|hi| v < hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchedFrom {
    UrlFilename,
    CdnRef,
    VersionHint,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LibraryDetection {
    pub library: String,
    pub version: String,
    pub matched_from: MatchedFrom,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("vulnerability db {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("vulnerability db is not valid JSON: {0}")]
    Json(String),
    #[error("vulnerability db entry '{entry}': {message}")]
    Schema { entry: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("unmatchable version '{version}' for {library}")]
    Unmatchable { library: String, version: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    pub advisories: Vec<LibraryAdvisory>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uri_patterns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filename_patterns: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ExtractorKind {
    Uri,
    Filename,
}

/// Immutable after load.
#[derive(Debug, Clone)]
pub struct VulnDb {
    libraries: BTreeMap<String, LibraryEntry>,
    aliases: HashMap<String, String>,
    extractors: Vec<(String, ExtractorKind, Regex)>,
    snapshot_hash: String,
    warnings: Vec<String>,
}

fn strings(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(a)) => a.iter().filter_map(|x| x.as_str().map(str::to_owned)).collect(),
        _ => Vec::new(),
    }
}

fn normalize_name(name: &str) -> String {
    name.trim().to_ascii_lowercase()
}

/// Alias keys under which a library name is looked up.
fn name_variants(name: &str) -> Vec<String> {
    let n = normalize_name(name);
    let mut out = vec![n.clone()];
    for suffix in [".js", "js", "-js"] {
        if let Some(stem) = n.strip_suffix(suffix).filter(|s| !s.is_empty()) {
            out.push(stem.to_owned());
        }
    }
    out
}

fn parse_bound(entry: &str, v: Option<&Value>, field: &str) -> Result<Option<Version>, LoadError> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Version::parse(s)
            .map(Some)
            .map_err(|e| LoadError::Schema { entry: entry.to_owned(), message: format!("{field}: {e}") }),
        Some(other) => Err(LoadError::Schema { entry: entry.to_owned(), message: format!("{field} must be a string, found {other}") }),
    }
}

impl VulnDb {
    pub fn bundled() -> Self {
        Self::from_json_str(BUNDLED_SNAPSHOT).expect("bundled snapshot is valid")
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    /// Parses and validates a snapshot. Every advisory needs at least one
    /// well-formed bound; a missing severity defaults to medium and is
    /// reported in [`warnings`](Self::warnings).
    pub fn from_json_str(text: &str) -> Result<Self, LoadError> {
        let root: Value = serde_json::from_str(text).map_err(|e| LoadError::Json(e.to_string()))?;
        let Value::Object(root) = root else {
            return Err(LoadError::Json("top level must be an object of libraries".into()));
        };
        let mut db = VulnDb {
            libraries: BTreeMap::new(),
            aliases: HashMap::new(),
            extractors: Vec::new(),
            snapshot_hash: hex::encode(Sha256::digest(text.as_bytes())),
            warnings: Vec::new(),
        };
        for (name, entry) in &root {
            let Value::Object(entry) = entry else {
                return Err(LoadError::Schema { entry: name.clone(), message: "entry must be an object".into() });
            };
            let Some(vulns) = entry.get("vulnerabilities") else {
                // Pseudo-entries (e.g. "dont check") carry only extractors.
                continue;
            };
            let Value::Array(vulns) = vulns else {
                return Err(LoadError::Schema { entry: name.clone(), message: "vulnerabilities must be an array".into() });
            };
            let mut advisories = Vec::new();
            for (i, adv) in vulns.iter().enumerate() {
                let at = format!("{name}[{i}]");
                let below = parse_bound(&at, adv.get("below"), "below")?;
                let at_or_above = parse_bound(&at, adv.get("atOrAbove"), "atOrAbove")?;
                if below.is_none() && at_or_above.is_none() {
                    return Err(LoadError::Schema { entry: at, message: "advisory has neither `below` nor `atOrAbove`".into() });
                }
                let severity = match adv.get("severity").and_then(Value::as_str) {
                    Some(s) => serde_json::from_value(json!(s.to_ascii_lowercase()))
                        .map_err(|_| LoadError::Schema { entry: at.clone(), message: format!("unknown severity '{s}'") })?,
                    None => {
                        db.warnings.push(format!("{at}: missing severity, defaulting to medium"));
                        Severity::Medium
                    }
                };
                let ids = adv.get("identifiers").and_then(Value::as_object);
                let summary = ids.and_then(|m| m.get("summary")).and_then(Value::as_str).unwrap_or_default().to_owned();
                let mut identifiers = Vec::new();
                for (k, v) in ids.into_iter().flatten() {
                    if k == "summary" {
                        continue;
                    }
                    for s in strings(Some(v)).into_iter().chain(v.as_i64().map(|n| n.to_string())) {
                        identifiers.push(if k == "CVE" { s } else { format!("{k}:{s}") });
                    }
                }
                advisories.push(LibraryAdvisory {
                    library: name.clone(),
                    below,
                    at_or_above,
                    severity,
                    identifiers,
                    summary,
                    info: strings(adv.get("info")),
                });
            }
            let mut aliases = strings(entry.get("bowername"));
            aliases.extend(strings(entry.get("npmname")));
            let extractors = entry.get("extractors").and_then(Value::as_object);
            let lib = LibraryEntry {
                name: name.clone(),
                aliases,
                advisories,
                uri_patterns: strings(extractors.and_then(|e| e.get("uri"))),
                filename_patterns: strings(extractors.and_then(|e| e.get("filename"))),
            };
            db.insert(lib);
        }
        Ok(db)
    }

    fn insert(&mut self, lib: LibraryEntry) {
        for alias in std::iter::once(&lib.name).chain(&lib.aliases) {
            for key in name_variants(alias) {
                self.aliases.entry(key).or_insert_with(|| lib.name.clone());
            }
        }
        for (kind, patterns) in [(ExtractorKind::Uri, &lib.uri_patterns), (ExtractorKind::Filename, &lib.filename_patterns)] {
            for p in patterns {
                let expanded = p.replace("§§version§§", VERSION_PATTERN);
                match Regex::new(&expanded) {
                    Ok(re) if re.captures_len() > 1 => self.extractors.push((lib.name.clone(), kind, re)),
                    Ok(_) => {}
                    Err(e) => self.warnings.push(format!("{}: skipping extractor '{p}': {e}", lib.name)),
                }
            }
        }
        self.libraries.insert(lib.name.clone(), lib);
    }

    pub fn library_count(&self) -> usize {
        self.libraries.len()
    }

    pub fn advisory_count(&self) -> usize {
        self.libraries.values().map(|l| l.advisories.len()).sum()
    }

    pub fn libraries(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.libraries.values()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// SHA-256 of the snapshot text this handle was loaded from.
    pub fn snapshot_hash(&self) -> &str {
        &self.snapshot_hash
    }

    /// Maps a detected name (`angular`, `moment`, `jQuery`) to a database key.
    pub fn resolve(&self, name: &str) -> Option<&str> {
        name_variants(name).iter().find_map(|k| self.aliases.get(k)).map(String::as_str)
    }

    /// Advisories affecting the detected version. The detection's library
    /// name is resolved through aliases first.
    pub fn match_detection(&self, detection: &LibraryDetection) -> Result<Vec<&LibraryAdvisory>, MatchError> {
        let version = Version::parse(&detection.version)
            .map_err(|_| MatchError::Unmatchable { library: detection.library.clone(), version: detection.version.clone() })?;
        let Some(lib) = self.resolve(&detection.library).and_then(|k| self.libraries.get(k)) else {
            return Ok(Vec::new());
        };
        Ok(lib.advisories.iter().filter(|a| a.affects(&version)).collect())
    }

    /// Detection using the database's own URI/filename extractors first,
    /// then the generic patterns of [`detect_library`]. The library name is
    /// resolved to a database key when possible.
    pub fn detect(&self, source: LibrarySource<'_>) -> Option<LibraryDetection> {
        if let LibrarySource::Url(u) = source {
            let file = file_name(&u.url);
            for (lib, kind, re) in &self.extractors {
                let haystack = match kind {
                    ExtractorKind::Uri => u.url.as_str(),
                    ExtractorKind::Filename => file,
                };
                if let Some(v) = re.captures(haystack).and_then(|c| c.get(1)).map(|m| m.as_str()) {
                    let v = v.trim_end_matches(['.', '-', '_']);
                    if Version::parse(v).is_ok() {
                        let matched_from = if *kind == ExtractorKind::Filename { MatchedFrom::UrlFilename } else { MatchedFrom::VersionHint };
                        return Some(LibraryDetection { library: lib.clone(), version: v.to_owned(), matched_from });
                    }
                }
            }
        }
        let mut d = detect_library(source)?;
        if let Some(key) = self.resolve(&d.library) {
            d.library = key.to_owned();
        }
        Some(d)
    }

    /// Serializes back to the retire.js repository format.
    pub fn to_json(&self) -> Value {
        let mut root = Map::new();
        for lib in self.libraries.values() {
            let vulns: Vec<Value> = lib
                .advisories
                .iter()
                .map(|a| {
                    let mut v = Map::new();
                    if let Some(b) = &a.below {
                        v.insert("below".into(), json!(b.as_str()));
                    }
                    if let Some(b) = &a.at_or_above {
                        v.insert("atOrAbove".into(), json!(b.as_str()));
                    }
                    v.insert("severity".into(), json!(a.severity.to_string()));
                    let mut ids = Map::new();
                    ids.insert("summary".into(), json!(a.summary));
                    for id in &a.identifiers {
                        let (k, val) = id.split_once(':').unwrap_or(("CVE", id));
                        ids.entry(k.to_owned()).or_insert_with(|| json!([])).as_array_mut().expect("array").push(json!(val));
                    }
                    v.insert("identifiers".into(), Value::Object(ids));
                    v.insert("info".into(), json!(a.info));
                    Value::Object(v)
                })
                .collect();
            let mut entry = Map::new();
            if !lib.aliases.is_empty() {
                entry.insert("bowername".into(), json!(lib.aliases));
            }
            entry.insert("vulnerabilities".into(), Value::Array(vulns));
            entry.insert("extractors".into(), json!({"uri": lib.uri_patterns, "filename": lib.filename_patterns}));
            root.insert(lib.name.clone(), Value::Object(entry));
        }
        Value::Object(root)
    }
}

/// What a library detection looks at.
#[derive(Debug, Clone, Copy)]
pub enum LibrarySource<'a> {
    Url(&'a UrlRef),
    Cdn(&'a CdnPackageRef),
}

impl<'a> From<&'a UrlRef> for LibrarySource<'a> {
    fn from(u: &'a UrlRef) -> Self {
        LibrarySource::Url(u)
    }
}

impl<'a> From<&'a CdnPackageRef> for LibrarySource<'a> {
    fn from(c: &'a CdnPackageRef) -> Self {
        LibrarySource::Cdn(c)
    }
}

fn file_name(url: &str) -> &str {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    path.rsplit('/').next().unwrap_or("")
}

static VERSIONED_FILE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([A-Za-z][A-Za-z0-9_.-]*?)[-_.@]v?(\d+(?:\.\d+)+(?:-[0-9A-Za-z]+(?:\.[0-9A-Za-z]+)*)?)((?:\.(?:min|slim|pack|prod|production|umd))*)\.m?js$").unwrap()
});
static PLAIN_FILE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Za-z][A-Za-z0-9_-]*(?:\.[A-Za-z][A-Za-z0-9_-]*)*?)((?:\.(?:min|slim|pack|prod|production|umd|bundle))*)\.m?js$").unwrap());
static AT_SEGMENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"/((?:@[A-Za-z0-9_.-]+/)?[A-Za-z][A-Za-z0-9_.-]*)@v?(\d+(?:\.\d+)+(?:-[0-9A-Za-z.]+)?)(?:/|$)").unwrap());

/// File stems that say nothing about the library.
const GENERIC_STEMS: &[&str] = &["app", "bundle", "index", "main", "script", "scripts", "vendor", "all", "dist", "lib", "core"];

/// Recovers `(library, version)` from a URL or CDN reference without a
/// database: `{lib}-{ver}.min.js`, `{lib}@{ver}/...` path segments,
/// `{lib}.js?v={ver}`, `/{lib}/{ver}/{lib}.js` paths, or the CDN fields.
/// Returns `None` when the library or version cannot be pinned down.
pub fn detect_library(source: LibrarySource<'_>) -> Option<LibraryDetection> {
    match source {
        LibrarySource::Cdn(c) => {
            let version = c.version.as_deref()?.trim_start_matches('v');
            Version::parse(version).ok()?;
            Some(LibraryDetection { library: c.package.clone(), version: version.to_owned(), matched_from: MatchedFrom::CdnRef })
        }
        LibrarySource::Url(u) => {
            let file = file_name(&u.url);
            if let Some(c) = VERSIONED_FILE.captures(file) {
                let library = c[1].to_owned();
                if !GENERIC_STEMS.contains(&library.to_ascii_lowercase().as_str()) && Version::parse(&c[2]).is_ok() {
                    return Some(LibraryDetection { library, version: c[2].to_owned(), matched_from: MatchedFrom::UrlFilename });
                }
            }
            let path = u.url.split(['?', '#']).next().unwrap_or(&u.url);
            if let Some(c) = AT_SEGMENT.captures(path) {
                if Version::parse(&c[2]).is_ok() {
                    let library = c[1].rsplit('/').next().unwrap_or(&c[1]).to_owned();
                    return Some(LibraryDetection { library, version: c[2].to_owned(), matched_from: MatchedFrom::VersionHint });
                }
            }
            let stem = PLAIN_FILE.captures(file).map(|c| c[1].to_owned())?;
            if GENERIC_STEMS.contains(&stem.to_ascii_lowercase().as_str()) {
                return None;
            }
            let version = u.version_hint.as_deref().map(|v| v.trim_start_matches('v')).filter(|v| Version::parse(v).is_ok())?;
            Some(LibraryDetection { library: stem, version: version.to_owned(), matched_from: MatchedFrom::VersionHint })
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum UpdateError {
    #[error("fetching {source_url}: {message}")]
    Fetch { source_url: String, message: String },
    #[error(transparent)]
    Invalid(#[from] LoadError),
    #[error("writing {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

/// Reads a snapshot from an http(s) URL, a `file://` URL or a local path.
pub fn fetch_snapshot(source_url: &str, timeout: std::time::Duration) -> Result<String, UpdateError> {
    let fail = |message: String| UpdateError::Fetch { source_url: source_url.to_owned(), message };
    if !source_url.starts_with("http://") && !source_url.starts_with("https://") {
        let path = source_url.strip_prefix("file://").unwrap_or(source_url);
        return std::fs::read_to_string(path).map_err(|e| fail(e.to_string()));
    }
    use crate::probe::{Fetched, HttpClient, HttpRequest, LiveTransport, Politeness, RetryPolicy, SystemClock};
    let transport = LiveTransport::new(timeout).map_err(|e| fail(e.to_string()))?;
    let client = HttpClient::new(std::sync::Arc::new(transport), RetryPolicy::default(), Politeness::default(), std::sync::Arc::new(SystemClock));
    let (fetched, _) = client.fetch_following(&HttpRequest::get(source_url), 5).map_err(|e| fail(e.to_string()))?;
    match fetched {
        Fetched::Response(r) if r.status == 200 => Ok(r.body),
        Fetched::Response(r) => Err(fail(format!("HTTP {}", r.status))),
        Fetched::Failed { error, attempts } => Err(fail(format!("{error} after {attempts} attempt(s)"))),
    }
}

/// Fetches and validates a snapshot, then replaces `dest` with it. A
/// snapshot that fails to load leaves `dest` untouched.
pub fn update_snapshot(source_url: &str, dest: &Path, timeout: std::time::Duration) -> Result<VulnDb, UpdateError> {
    let text = fetch_snapshot(source_url, timeout)?;
    let db = VulnDb::from_json_str(&text)?;
    let write_err = |source| UpdateError::Write { path: dest.display().to_string(), source };
    if let Some(parent) = dest.parent() {
        std::fs::create_dir_all(parent).map_err(write_err)?;
    }
    let tmp = dest.with_extension("json.tmp");
    std::fs::write(&tmp, &text).map_err(write_err)?;
    std::fs::rename(&tmp, dest).map_err(write_err)?;
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{extract_url_refs, CdnHosts, CodeBlock, Span};

    const FIXTURE: &str = r#"{
      "axios": {"vulnerabilities": [
        {"below": "0.21.2", "severity": "high", "identifiers": {"CVE": ["CVE-2021-3749"], "summary": "ReDoS"}},
        {"atOrAbove": "0.8.1", "below": "0.18.1", "severity": "medium", "identifiers": {"CVE": ["CVE-2019-10742"]}}
      ]},
      "jquery": {"bowername": ["jQuery"], "vulnerabilities": [
        {"atOrAbove": "1.2.0", "below": "3.5.0", "severity": "medium", "identifiers": {"CVE": ["CVE-2020-11022"], "summary": "XSS"}}
      ]}
    }"#;

    fn url(u: &str) -> UrlRef {
        extract_url_refs(&CodeBlock::standalone(u), &CdnHosts::default(), &mut Vec::new()).remove(0)
    }

    fn det(lib: &str, v: &str) -> LibraryDetection {
        LibraryDetection { library: lib.into(), version: v.into(), matched_from: MatchedFrom::CdnRef }
    }

    #[test]
    fn fixture_counts() {
        let db = VulnDb::from_json_str(FIXTURE).unwrap();
        assert_eq!((db.library_count(), db.advisory_count()), (2, 3));
    }

    #[test]
    fn malformed_bound_is_rejected() {
        let err = VulnDb::from_json_str(r#"{"lib": {"vulnerabilities": [{"below": "1.2.x", "severity": "low"}]}}"#).unwrap_err();
        assert!(matches!(err, LoadError::Schema { ref entry, .. } if entry == "lib[0]"), "{err}");
        let err = VulnDb::from_json_str(r#"{"lib": {"vulnerabilities": [{"severity": "low"}]}}"#).unwrap_err();
        assert!(matches!(err, LoadError::Schema { .. }));
    }

    #[test]
    fn bundled_snapshot_loads() {
        let db = VulnDb::bundled();
        assert_eq!(db.library_count(), 33);
        assert_eq!(db.advisory_count(), 134);
        assert_eq!(db.warnings().len(), 1);
    }

    #[test]
    fn axios_boundaries() {
        let db = VulnDb::from_json_str(FIXTURE).unwrap();
        let m = db.match_detection(&det("axios", "0.21.1")).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].severity, Severity::High);
        assert!(db.match_detection(&det("axios", "0.21.2")).unwrap().is_empty());
        assert_eq!(db.match_detection(&det("axios", "0.8.1")).unwrap().len(), 2);
        assert!(matches!(db.match_detection(&det("axios", "latest")), Err(MatchError::Unmatchable { .. })));
    }

    #[test]
    fn detection_patterns() {
        let d = detect_library(LibrarySource::Url(&url("https://code.example.com/jquery-1.8.3.min.js"))).unwrap();
        assert_eq!((d.library.as_str(), d.version.as_str(), d.matched_from), ("jquery", "1.8.3", MatchedFrom::UrlFilename));
        let d = detect_library(LibrarySource::Url(&url("https://example.com/js/moment.js?v=2.29.1"))).unwrap();
        assert_eq!((d.library.as_str(), d.version.as_str(), d.matched_from), ("moment", "2.29.1", MatchedFrom::VersionHint));
        let d = detect_library(LibrarySource::Url(&url("https://cdnjs.cloudflare.com/ajax/libs/angular.js/1.5.0/angular.min.js"))).unwrap();
        assert_eq!((d.library.as_str(), d.version.as_str()), ("angular", "1.5.0"));
        assert_eq!(detect_library(LibrarySource::Url(&url("https://example.com/static/bundle.js"))), None);
        let cdn = CdnPackageRef {
            cdn_host: "cdn.jsdelivr.net".into(),
            package: "axios".into(),
            version: Some("0.21.1".into()),
            file: None,
            registry: None,
            url: "https://cdn.jsdelivr.net/npm/axios@0.21.1".into(),
            origin: Span::new(0, 0),
        };
        let d = detect_library(LibrarySource::Cdn(&cdn)).unwrap();
        assert_eq!((d.library.as_str(), d.version.as_str(), d.matched_from), ("axios", "0.21.1", MatchedFrom::CdnRef));
    }

    #[test]
    fn db_extractors_and_aliases() {
        let db = VulnDb::bundled();
        assert_eq!(db.resolve("angular"), Some("angularjs"));
        assert_eq!(db.resolve("moment"), Some("moment.js"));
        assert_eq!(db.resolve("jQuery"), Some("jquery"));
        let d = db.detect(LibrarySource::Url(&url("https://ajax.googleapis.com/ajax/libs/jquery/1.8.3/jquery.min.js"))).unwrap();
        assert_eq!((d.library.as_str(), d.version.as_str()), ("jquery", "1.8.3"));
        assert!(!db.match_detection(&d).unwrap().is_empty());
    }

    #[test]
    fn json_round_trip_preserves_bounds() {
        let db = VulnDb::bundled();
        let again = VulnDb::from_json_str(&db.to_json().to_string()).unwrap();
        assert_eq!(db.advisory_count(), again.advisory_count());
        for (a, b) in db.libraries().zip(again.libraries()) {
            assert_eq!(a.advisories, b.advisories);
        }
    }

    #[test]
    fn update_from_file_validates_first() {
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("db").join("jsrepository.json");
        let good = dir.path().join("good.json");
        std::fs::write(&good, BUNDLED_SNAPSHOT).unwrap();
        let db = update_snapshot(&format!("file://{}", good.display()), &dest, std::time::Duration::from_secs(1)).unwrap();
        assert_eq!(db.snapshot_hash(), VulnDb::bundled().snapshot_hash());
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, "[1,2]").unwrap();
        assert!(update_snapshot(bad.to_str().unwrap(), &dest, std::time::Duration::from_secs(1)).is_err());
        assert_eq!(std::fs::read_to_string(&dest).unwrap(), BUNDLED_SNAPSHOT);
    }
}
