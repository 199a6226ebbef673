//! URL references and CDN package links.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use url::Url;

use super::packages::Registry;
use super::{CodeBlock, Diagnostic, DiagnosticKind, Span};
use crate::domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UrlKind {
    Script,
    Stylesheet,
    Cdn,
    Repo,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UrlRef {
    /// Surface text of the URL as it appears in the response.
    pub url: String,
    pub host: String,
    /// Registrable domain, or the host itself when it has none.
    pub domain: String,
    /// Whether `domain` is a public registrable domain.
    pub registrable: bool,
    pub kind: UrlKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_hint: Option<String>,
    pub origin: Span,
}

impl UrlRef {
    pub fn dedup_key(&self) -> String {
        format!("url:{}", self.url)
    }

    pub fn parsed(&self) -> Option<Url> {
        Url::parse(&self.url).ok()
    }
}

/// Path template of a CDN host, e.g. `/npm/:package@:version/:file`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdnHost {
    pub host: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    /// Registry the packages behind this CDN come from, when any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<Registry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CdnHosts(pub Vec<CdnHost>);

impl Default for CdnHosts {
    fn default() -> Self {
        let host = |h: &str, t: &str, r: Option<Registry>| CdnHost { host: h.into(), template: Some(t.into()), registry: r };
        CdnHosts(vec![
            host("unpkg.com", "/:package@:version/:file", Some(Registry::Npm)),
            host("cdn.jsdelivr.net", "/npm/:package@:version/:file", Some(Registry::Npm)),
            host("cdnjs.cloudflare.com", "/ajax/libs/:package/:version/:file", None),
        ])
    }
}

impl CdnHosts {
    pub fn get(&self, host: &str) -> Option<&CdnHost> {
        let host = host.to_ascii_lowercase();
        self.0.iter().find(|h| h.host.eq_ignore_ascii_case(&host))
    }

    pub fn contains(&self, host: &str) -> bool {
        self.get(host).is_some()
    }

    /// Adds a host (without a template) unless it is already present.
    pub fn add(&mut self, host: &str) {
        if !self.contains(host) {
            self.0.push(CdnHost { host: host.to_ascii_lowercase(), template: None, registry: None });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CdnPackageRef {
    pub cdn_host: String,
    pub package: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<Registry>,
    /// The URL this link was parsed from.
    pub url: String,
    pub origin: Span,
}

impl CdnPackageRef {
    pub fn dedup_key(&self) -> String {
        format!("cdn:{}", self.url)
    }
}

fn is_url_terminator(b: u8) -> bool {
    b.is_ascii_whitespace()
        || matches!(b, b'"' | b'\'' | b'<' | b'>' | b'`' | b'(' | b')' | b'[' | b']' | b'{' | b'}' | b'|' | b'\\' | b'^')
}

/// Finds `http(s)://` candidates and their (relative) byte ranges.
fn url_candidates(text: &str) -> Vec<(usize, usize)> {
    static START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bhttps?://").unwrap());
    let bytes = text.as_bytes();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for m in START.find_iter(text) {
        if out.last().is_some_and(|&(_, end)| m.start() < end) {
            continue;
        }
        let mut end = m.end();
        while end < bytes.len() && !is_url_terminator(bytes[end]) {
            if bytes[end] == b'$' && bytes.get(end + 1) == Some(&b'{') {
                break;
            }
            end += 1;
        }
        while end > m.end() && matches!(bytes[end - 1], b'.' | b',' | b';' | b':' | b'!' | b'?' | b'*') {
            end -= 1;
        }
        out.push((m.start(), end));
    }
    out
}

/// The enclosing `<tag ...>` text if `pos` sits inside an HTML start tag.
fn enclosing_tag(text: &str, pos: usize) -> Option<&str> {
    let open = text[..pos].rfind('<')?;
    if text[open..pos].contains('>') {
        return None;
    }
    let close = text[pos..].find('>').map_or(text.len(), |c| pos + c);
    Some(&text[open..close])
}

fn version_hint(url: &Url) -> Option<String> {
    static AT_VERSION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@v?(\d+(?:\.\d+)*(?:-[0-9A-Za-z.]+)?)").unwrap());
    static FILE_VERSION: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"[-_.]v?(\d+\.\d+(?:\.\d+)*(?:-[0-9A-Za-z]+)?)(?:\.min)?\.(?:js|mjs|css)$").unwrap());
    static SEGMENT_VERSION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^v?(\d+(?:\.\d+)+(?:-[0-9A-Za-z.]+)?)$").unwrap());

    for (k, v) in url.query_pairs() {
        if matches!(k.as_ref(), "v" | "ver" | "version") && v.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            return Some(v.into_owned());
        }
    }
    let path = url.path();
    if let Some(c) = AT_VERSION.captures(path) {
        return Some(c[1].to_owned());
    }
    let file = path.rsplit('/').next().unwrap_or("");
    if let Some(c) = FILE_VERSION.captures(file) {
        return Some(c[1].to_owned());
    }
    path.split('/').find_map(|seg| SEGMENT_VERSION.captures(seg).map(|c| c[1].to_owned()))
}

fn classify(url: &Url, host: &str, cdn: &CdnHosts, tag: Option<&str>) -> UrlKind {
    if cdn.contains(host) {
        return UrlKind::Cdn;
    }
    if matches!(host, "github.com" | "www.github.com") {
        return UrlKind::Repo;
    }
    let path = url.path().to_ascii_lowercase();
    let tag_lower = tag.map(str::to_ascii_lowercase);
    let tag_name = tag_lower.as_deref().map(|t| t.trim_start_matches('<').split(|c: char| c.is_whitespace()).next().unwrap_or(""));
    if tag_name == Some("script") || path.ends_with(".js") || path.ends_with(".mjs") {
        return UrlKind::Script;
    }
    if path.ends_with(".css") || (tag_name == Some("link") && tag_lower.as_deref().is_some_and(|t| t.contains("stylesheet"))) {
        return UrlKind::Stylesheet;
    }
    UrlKind::Other
}

/// Returns every absolute http(s) URL in the block. Malformed URLs become
/// diagnostics.
pub fn extract_url_refs(block: &CodeBlock, cdn: &CdnHosts, diags: &mut Vec<Diagnostic>) -> Vec<UrlRef> {
    let mut out = Vec::new();
    for (start, end) in url_candidates(&block.text) {
        let surface = &block.text[start..end];
        let origin = Span::new(start, end).shift(block.span.start);
        let parsed = match Url::parse(surface) {
            Ok(u) => u,
            Err(e) => {
                diags.push(Diagnostic::new(DiagnosticKind::MalformedUrl, format!("{surface}: {e}"), Some(origin)));
                continue;
            }
        };
        let Some(host) = parsed.host_str().map(str::to_ascii_lowercase).filter(|h| !h.is_empty()) else {
            diags.push(Diagnostic::new(DiagnosticKind::MalformedUrl, format!("{surface}: no host"), Some(origin)));
            continue;
        };
        let tag = enclosing_tag(&block.text, start);
        let kind = classify(&parsed, &host, cdn, tag);
        let registrable = domain::registrable_domain(&host);
        out.push(UrlRef {
            url: surface.to_owned(),
            domain: registrable.clone().unwrap_or_else(|| domain::domain_key(&host)),
            registrable: registrable.is_some(),
            host,
            kind,
            version_hint: version_hint(&parsed),
            origin,
        });
    }
    out
}

/// Parses the package, version and file out of a CDN link, following the
/// host's path template. Hosts without a (matching) template yield `None`.
pub fn extract_cdn_package(url: &UrlRef, cdn: &CdnHosts) -> Option<CdnPackageRef> {
    if url.kind != UrlKind::Cdn {
        return None;
    }
    let entry = cdn.get(&url.host)?;
    let template = entry.template.as_deref()?;
    let (prefix, rest) = template.split_once(":package")?;
    let at_form = rest.starts_with("@:version");
    if !at_form && !rest.starts_with("/:version") {
        return None;
    }
    let parsed = url.parsed()?;
    let path = parsed.path();
    let tail = path.strip_prefix(prefix)?;
    let segments: Vec<&str> = tail.split('/').collect();

    let (package, version, file_from) = if at_form {
        // `@scope/name` occupies two segments.
        let (pkg_segments, first_after) = if segments.first()?.starts_with('@') { (2, 2) } else { (1, 1) };
        if segments.len() < pkg_segments {
            return None;
        }
        let joined = segments[..pkg_segments].join("/");
        let (name, version) = match joined[1..].rfind('@') {
            Some(p) => (joined[..p + 1].to_owned(), Some(joined[p + 2..].to_owned())),
            None => (joined, None),
        };
        (name, version, first_after)
    } else {
        let name = segments.first()?.to_string();
        let version = segments.get(1).filter(|v| !v.is_empty()).map(|v| v.to_string());
        (name, version, 2)
    };
    if package.is_empty() || package.ends_with('/') {
        return None;
    }
    let file = segments.get(file_from..).map(|s| s.join("/")).filter(|f| !f.is_empty());
    Some(CdnPackageRef {
        cdn_host: url.host.clone(),
        package,
        version: version.filter(|v| !v.is_empty()),
        file,
        registry: entry.registry,
        url: url.url.clone(),
        origin: url.origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn urls(src: &str) -> Vec<UrlRef> {
        extract_url_refs(&CodeBlock::standalone(src), &CdnHosts::default(), &mut Vec::new())
    }

    #[test]
    fn script_with_query_version() {
        let u = urls(r#"<script src="https://example.com/libs?v=1.2.3"></script>"#);
        assert_eq!(u.len(), 1);
        assert_eq!(u[0].kind, UrlKind::Script);
        assert_eq!(u[0].domain, "example.com");
        assert_eq!(u[0].version_hint.as_deref(), Some("1.2.3"));
        assert_eq!(u[0].url, "https://example.com/libs?v=1.2.3");
    }

    #[test]
    fn no_urls() {
        assert!(urls("let x = 1;").is_empty());
    }

    #[test]
    fn cdn_and_other_kinds() {
        let u = urls("https://unpkg.com/lodash@4.17.21/lodash.min.js");
        assert_eq!(u[0].kind, UrlKind::Cdn);
        let u = urls(r#"<link rel="stylesheet" href="https://fonts.example.org/css2?family=Roboto">"#);
        assert_eq!(u[0].kind, UrlKind::Stylesheet);
        let u = urls("see https://github.com/user/repo.");
        assert_eq!(u[0].kind, UrlKind::Repo);
        assert_eq!(u[0].url, "https://github.com/user/repo");
        let u = urls("fetch('https://api.example.net/v1/items')");
        assert_eq!(u[0].kind, UrlKind::Other);
        assert_eq!(u[0].url, "https://api.example.net/v1/items");
        let u = urls("https://code.jquery.com/jquery-3.5.1.min.js");
        assert_eq!(u[0].kind, UrlKind::Script);
        assert_eq!(u[0].version_hint.as_deref(), Some("3.5.1"));
        assert_eq!(u[0].domain, "jquery.com");
    }

    #[test]
    fn malformed_url_is_a_diagnostic() {
        let mut diags = Vec::new();
        let out = extract_url_refs(&CodeBlock::standalone("see http:// for details"), &CdnHosts::default(), &mut diags);
        assert!(out.is_empty());
        assert_eq!(diags.len(), 1);
        let mut diags = Vec::new();
        extract_url_refs(&CodeBlock::standalone("http://[::1"), &CdnHosts::default(), &mut diags);
        assert_eq!(diags[0].kind, DiagnosticKind::MalformedUrl);
    }

    fn cdn(src: &str) -> Option<CdnPackageRef> {
        extract_cdn_package(&urls(src)[0], &CdnHosts::default())
    }

    #[test]
    fn unpkg_template() {
        let c = cdn("https://unpkg.com/lodash@4.17.21/lodash.min.js").unwrap();
        assert_eq!((c.cdn_host.as_str(), c.package.as_str()), ("unpkg.com", "lodash"));
        assert_eq!(c.version.as_deref(), Some("4.17.21"));
        assert_eq!(c.file.as_deref(), Some("lodash.min.js"));
        let c = cdn("https://unpkg.com/lodash").unwrap();
        assert_eq!((c.package.as_str(), c.version, c.file), ("lodash", None, None));
        let c = cdn("https://unpkg.com/@babel/standalone@7.0.0/babel.min.js").unwrap();
        assert_eq!(c.package, "@babel/standalone");
        assert_eq!(c.version.as_deref(), Some("7.0.0"));
    }

    #[test]
    fn jsdelivr_and_cdnjs_templates() {
        let c = cdn("https://cdn.jsdelivr.net/npm/axios@0.21.1/dist/axios.min.js").unwrap();
        assert_eq!(c.cdn_host, "cdn.jsdelivr.net");
        assert_eq!(c.package, "axios");
        assert_eq!(c.version.as_deref(), Some("0.21.1"));
        assert_eq!(c.file.as_deref(), Some("dist/axios.min.js"));
        assert_eq!(c.registry, Some(Registry::Npm));
        assert!(cdn("https://cdn.jsdelivr.net/gh/user/repo@1.0/x.js").is_none());
        let c = cdn("https://cdnjs.cloudflare.com/ajax/libs/jquery/3.5.1/jquery.min.js").unwrap();
        assert_eq!((c.package.as_str(), c.version.as_deref()), ("jquery", Some("3.5.1")));
        assert_eq!(c.registry, None);
    }

    #[test]
    fn user_added_host_without_template() {
        let mut hosts = CdnHosts::default();
        hosts.add("cdn.example.org");
        let u = extract_url_refs(&CodeBlock::standalone("https://cdn.example.org/x.js"), &hosts, &mut Vec::new());
        assert_eq!(u[0].kind, UrlKind::Cdn);
        assert!(extract_cdn_package(&u[0], &hosts).is_none());
    }
}
