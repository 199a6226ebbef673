//! Threat findings: pure detectors over probe outcomes, the per-response
//! assessment pipeline, and aggregate rates and overlaps.

mod metrics;
mod pipeline;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ci::{HallucinatedPart, InjectionFinding, InjectionSeverity, RefClassification, RefKind};
use crate::extract::{CdnPackageRef, PackageRef, PluginRef, RepoRef, UrlRef};
use crate::probe::{Availability, ProbeOutcome, ProbeStatus};
use crate::vulndb::{LibraryAdvisory, LibraryDetection};

pub use crate::vulndb::Severity;
pub use metrics::{compute_metrics, compute_overlap, default_family, CountMode, OverlapEntry, OverlapReport, ScanMetrics};
pub use pipeline::{AssessOptions, Assessor, ComponentOutcome, ComponentRecord, Note, ResponseAssessment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThreatCategory {
    PackageHallucination,
    DomainHallucination,
    #[serde(rename = "github-account-hallucination")]
    GitHubAccountHallucination,
    #[serde(rename = "ci-plugin-hallucination")]
    CIPluginHallucination,
    #[serde(rename = "ci-plugin-version-hallucination")]
    CIPluginVersionHallucination,
    #[serde(rename = "ci-plugin-version-reuse")]
    CIPluginVersionReuse,
    VulnerableThirdPartyVersion,
    #[serde(rename = "vulnerable-ci-configuration")]
    VulnerableCIConfiguration,
    ResourceAbsence,
    PackageDeprecation,
    #[serde(rename = "ci-plugin-redirection-hijack")]
    CIPluginRedirectionHijack,
}

impl ThreatCategory {
    pub const ALL: [ThreatCategory; 11] = [
        ThreatCategory::PackageHallucination,
        ThreatCategory::DomainHallucination,
        ThreatCategory::GitHubAccountHallucination,
        ThreatCategory::CIPluginHallucination,
        ThreatCategory::CIPluginVersionHallucination,
        ThreatCategory::CIPluginVersionReuse,
        ThreatCategory::VulnerableThirdPartyVersion,
        ThreatCategory::VulnerableCIConfiguration,
        ThreatCategory::ResourceAbsence,
        ThreatCategory::PackageDeprecation,
        ThreatCategory::CIPluginRedirectionHijack,
    ];

    /// Stable kebab-case identifier.
    pub fn as_str(self) -> &'static str {
        match self {
            ThreatCategory::PackageHallucination => "package-hallucination",
            ThreatCategory::DomainHallucination => "domain-hallucination",
            ThreatCategory::GitHubAccountHallucination => "github-account-hallucination",
            ThreatCategory::CIPluginHallucination => "ci-plugin-hallucination",
            ThreatCategory::CIPluginVersionHallucination => "ci-plugin-version-hallucination",
            ThreatCategory::CIPluginVersionReuse => "ci-plugin-version-reuse",
            ThreatCategory::VulnerableThirdPartyVersion => "vulnerable-third-party-version",
            ThreatCategory::VulnerableCIConfiguration => "vulnerable-ci-configuration",
            ThreatCategory::ResourceAbsence => "resource-absence",
            ThreatCategory::PackageDeprecation => "package-deprecation",
            ThreatCategory::CIPluginRedirectionHijack => "ci-plugin-redirection-hijack",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ThreatCategory::PackageHallucination => "Package hallucination",
            ThreatCategory::DomainHallucination => "Domain hallucination",
            ThreatCategory::GitHubAccountHallucination => "GitHub account hallucination",
            ThreatCategory::CIPluginHallucination => "CI plugin hallucination",
            ThreatCategory::CIPluginVersionHallucination => "CI plugin version hallucination",
            ThreatCategory::CIPluginVersionReuse => "CI plugin version reuse",
            ThreatCategory::VulnerableThirdPartyVersion => "Vulnerable third-party version",
            ThreatCategory::VulnerableCIConfiguration => "Vulnerable CI configuration",
            ThreatCategory::ResourceAbsence => "Resource absence",
            ThreatCategory::PackageDeprecation => "Package deprecation",
            ThreatCategory::CIPluginRedirectionHijack => "CI plugin redirection hijack",
        }
    }

    /// Whether an attacker can take the referenced name over.
    pub fn takeover_possible(self) -> bool {
        matches!(
            self,
            ThreatCategory::PackageHallucination
                | ThreatCategory::DomainHallucination
                | ThreatCategory::GitHubAccountHallucination
                | ThreatCategory::CIPluginHallucination
                | ThreatCategory::CIPluginRedirectionHijack
        )
    }

    /// Component kinds whose count forms the rate denominator, with the
    /// basis label reported next to the rate.
    pub fn bases(self) -> &'static [ComponentKind] {
        match self {
            ThreatCategory::PackageHallucination | ThreatCategory::PackageDeprecation => &[ComponentKind::Package],
            ThreatCategory::DomainHallucination | ThreatCategory::ResourceAbsence => &[ComponentKind::Url],
            ThreatCategory::GitHubAccountHallucination => &[ComponentKind::Repo],
            ThreatCategory::CIPluginHallucination
            | ThreatCategory::CIPluginVersionHallucination
            | ThreatCategory::CIPluginVersionReuse
            | ThreatCategory::CIPluginRedirectionHijack => &[ComponentKind::Plugin],
            ThreatCategory::VulnerableThirdPartyVersion => &[ComponentKind::Url, ComponentKind::Library],
            ThreatCategory::VulnerableCIConfiguration => &[ComponentKind::Workflow],
        }
    }
}

impl fmt::Display for ThreatCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hijackable {
    Yes,
    No,
    Unknown,
}

impl From<Option<bool>> for Hijackable {
    fn from(v: Option<bool>) -> Self {
        match v {
            Some(true) => Hijackable::Yes,
            Some(false) => Hijackable::No,
            None => Hijackable::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    Package,
    Url,
    Repo,
    Plugin,
    Workflow,
    Library,
}

impl ComponentKind {
    /// Basis label used in metric rows.
    pub fn basis(self) -> &'static str {
        match self {
            ComponentKind::Package => "packages",
            ComponentKind::Url => "urls",
            ComponentKind::Repo => "repos",
            ComponentKind::Plugin => "plugins",
            ComponentKind::Workflow => "workflows",
            ComponentKind::Library => "detected-libraries",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ComponentRef {
    Package(PackageRef),
    CdnPackage(CdnPackageRef),
    Url(UrlRef),
    Repo(RepoRef),
    Plugin(PluginRef),
    Workflow { id: String },
    Library { url: String, detection: LibraryDetection },
}

impl ComponentRef {
    /// Canonical component key.
    pub fn key(&self) -> String {
        match self {
            ComponentRef::Package(p) => p.dedup_key(),
            ComponentRef::CdnPackage(c) => c.dedup_key(),
            ComponentRef::Url(u) => u.dedup_key(),
            ComponentRef::Repo(r) => r.dedup_key(),
            ComponentRef::Plugin(p) => p.dedup_key(),
            ComponentRef::Workflow { id } => format!("workflow:{id}"),
            ComponentRef::Library { detection, .. } => format!("lib:{}@{}", detection.library, detection.version),
        }
    }

    pub fn kind(&self) -> ComponentKind {
        match self {
            ComponentRef::Package(_) | ComponentRef::CdnPackage(_) => ComponentKind::Package,
            ComponentRef::Url(_) => ComponentKind::Url,
            ComponentRef::Repo(_) => ComponentKind::Repo,
            ComponentRef::Plugin(_) => ComponentKind::Plugin,
            ComponentRef::Workflow { .. } => ComponentKind::Workflow,
            ComponentRef::Library { .. } => ComponentKind::Library,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreatFinding {
    pub component_key: String,
    pub component: ComponentRef,
    pub category: ThreatCategory,
    pub severity: Severity,
    pub evidence: Vec<String>,
    pub hijackable: Hijackable,
}

impl ThreatFinding {
    pub fn new(component: ComponentRef, category: ThreatCategory, severity: Severity, hijackable: Hijackable, evidence: Vec<String>) -> Self {
        Self { component_key: component.key(), component, category, severity, evidence, hijackable }
    }

    /// Evidence present, and `hijackable = yes` only where takeover exists.
    pub fn is_well_formed(&self) -> bool {
        !self.evidence.is_empty() && (self.hijackable != Hijackable::Yes || self.category.takeover_possible())
    }
}

/// Result of one detector: findings, free-text notes, and whether the
/// component's status could be established.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Verdict {
    pub findings: Vec<ThreatFinding>,
    pub notes: Vec<String>,
    pub resolved: bool,
}

impl Verdict {
    fn resolved() -> Self {
        Self { resolved: true, ..Default::default() }
    }

    fn unresolved(note: String) -> Self {
        Self { findings: Vec::new(), notes: vec![note], resolved: false }
    }

    fn finding(f: ThreatFinding) -> Self {
        Self { findings: vec![f], notes: Vec::new(), resolved: true }
    }

    fn note(note: String) -> Self {
        Self { findings: Vec::new(), notes: vec![note], resolved: true }
    }

    pub fn merge(&mut self, other: Verdict) {
        self.findings.extend(other.findings);
        self.notes.extend(other.notes);
        self.resolved &= other.resolved;
    }
}

/// One-line probe evidence, e.g. `npm left-pad: not-found (http 404)`.
pub fn probe_evidence(subject: &str, o: &ProbeOutcome) -> String {
    let code = o.http_code.map(|c| format!(" {c}")).unwrap_or_default();
    let target = o.redirect_target.as_deref().map(|t| format!(" -> {t}")).unwrap_or_default();
    format!("{subject}: {}{code}{target} ({}; checked {})", o.status, o.evidence, o.checked_at.to_rfc3339())
}

fn pkg_subject(r: &PackageRef) -> String {
    format!("{} {}", r.registry.display_name(), r.name)
}

/// `count_incomplete`: whether an incomplete Packagist name counts as a
/// hallucination (default) or is only noted.
pub fn detect_package_hallucination(r: &PackageRef, o: &ProbeOutcome, count_incomplete: bool) -> Verdict {
    let comp = || ComponentRef::Package(r.clone());
    let ev = vec![probe_evidence(&pkg_subject(r), o)];
    match o.status {
        ProbeStatus::NotFound => Verdict::finding(ThreatFinding::new(comp(), ThreatCategory::PackageHallucination, Severity::High, Hijackable::Yes, ev)),
        ProbeStatus::Incomplete if count_incomplete => {
            let mut ev = ev;
            ev.push("incomplete-name".into());
            Verdict::finding(ThreatFinding::new(comp(), ThreatCategory::PackageHallucination, Severity::Medium, Hijackable::No, ev))
        }
        ProbeStatus::Incomplete => Verdict::note(format!("{}: incomplete name (expected vendor/package)", r.dedup_key())),
        ProbeStatus::Unreachable => Verdict::unresolved(format!("{}: unresolved ({})", r.dedup_key(), o.evidence)),
        ProbeStatus::Exists | ProbeStatus::Redirected | ProbeStatus::Deprecated => Verdict::resolved(),
    }
}

/// Package named by a CDN link, probed in the CDN's backing registry.
pub fn detect_cdn_package_hallucination(c: &CdnPackageRef, o: &ProbeOutcome) -> Verdict {
    match o.status {
        ProbeStatus::NotFound => {
            let ev = vec![probe_evidence(&format!("npm {}", c.package), o), format!("cdn path: {}", c.url)];
            Verdict::finding(ThreatFinding::new(ComponentRef::CdnPackage(c.clone()), ThreatCategory::PackageHallucination, Severity::High, Hijackable::Yes, ev))
        }
        ProbeStatus::Unreachable => Verdict::unresolved(format!("{}: unresolved ({})", c.dedup_key(), o.evidence)),
        _ => Verdict::resolved(),
    }
}

/// `availability` is consulted only for unreachable URLs; `None` there
/// means the host has no registrable domain.
pub fn detect_domain_hallucination(u: &UrlRef, o: &ProbeOutcome, availability: Option<Availability>) -> Verdict {
    if o.status != ProbeStatus::Unreachable {
        return Verdict::resolved();
    }
    let comp = || ComponentRef::Url(u.clone());
    let ev = |a: &str| vec![probe_evidence(&u.url, o), format!("availability {}: {a}", u.domain)];
    match availability {
        Some(Availability::Available) => Verdict::finding(ThreatFinding::new(comp(), ThreatCategory::DomainHallucination, Severity::High, Hijackable::Yes, ev("available"))),
        Some(Availability::Unknown) => {
            Verdict::finding(ThreatFinding::new(comp(), ThreatCategory::DomainHallucination, Severity::Medium, Hijackable::Unknown, ev("unknown")))
        }
        Some(Availability::Taken) => Verdict::unresolved(format!("{}: unreachable but {} is registered", u.dedup_key(), u.domain)),
        None => Verdict::unresolved(format!("{}: unreachable, host {} is not registrable", u.dedup_key(), u.host)),
    }
}

pub fn detect_absence(u: &UrlRef, o: &ProbeOutcome) -> Verdict {
    match o.status {
        ProbeStatus::NotFound => Verdict::finding(ThreatFinding::new(
            ComponentRef::Url(u.clone()),
            ThreatCategory::ResourceAbsence,
            Severity::Medium,
            Hijackable::No,
            vec![probe_evidence(&u.url, o)],
        )),
        ProbeStatus::Redirected => Verdict::note(format!("{}: redirects to {}", u.dedup_key(), o.redirect_target.as_deref().unwrap_or("?"))),
        _ => Verdict::resolved(),
    }
}

/// `account` is the owner's probe, needed only when the repo is NotFound.
pub fn detect_account_hallucination(r: &RepoRef, repo: &ProbeOutcome, account: Option<&ProbeOutcome>) -> Verdict {
    let subject = format!("github {}/{}", r.owner, r.repo);
    match (repo.status, account.map(|a| a.status)) {
        (ProbeStatus::NotFound, Some(ProbeStatus::NotFound)) => {
            let ev = vec![probe_evidence(&subject, repo), probe_evidence(&format!("github account {}", r.owner), account.expect("matched Some"))];
            Verdict::finding(ThreatFinding::new(ComponentRef::Repo(r.clone()), ThreatCategory::GitHubAccountHallucination, Severity::High, Hijackable::Yes, ev))
        }
        (ProbeStatus::NotFound, Some(ProbeStatus::Exists | ProbeStatus::Redirected)) => {
            Verdict::note(format!("{}: repository absent, account {} exists", r.dedup_key(), r.owner))
        }
        (ProbeStatus::NotFound, _) => Verdict::unresolved(format!("{}: repository absent, account status unknown", r.dedup_key())),
        (ProbeStatus::Unreachable, _) => Verdict::unresolved(format!("{}: unresolved ({})", r.dedup_key(), repo.evidence)),
        (ProbeStatus::Redirected, _) => {
            Verdict::note(format!("{}: moved to {}", r.dedup_key(), repo.redirect_target.as_deref().unwrap_or("?")))
        }
        _ => Verdict::resolved(),
    }
}

/// Plugin findings from its classification and probes. `account` is the
/// owner's probe (needed when the repo is NotFound or Redirected).
pub fn detect_plugin_threats(c: &RefClassification, repo: &ProbeOutcome, account: Option<&ProbeOutcome>) -> Verdict {
    let p = &c.plugin;
    let key = p.dedup_key();
    let comp = || ComponentRef::Plugin(p.clone());
    let repo_ev = probe_evidence(&format!("github {}/{}", p.owner, p.repo), repo);
    let account_ev = || account.map(|a| probe_evidence(&format!("github account {}", p.owner), a));
    let mut v = Verdict::resolved();
    match (c.kind, c.hallucinated) {
        (RefKind::Hallucinated, Some(HallucinatedPart::Plugin)) => {
            let hijackable = match account.map(|a| a.status) {
                Some(ProbeStatus::NotFound) => Hijackable::Yes,
                Some(ProbeStatus::Exists | ProbeStatus::Redirected) => Hijackable::No,
                _ => Hijackable::Unknown,
            };
            let severity = if hijackable == Hijackable::Yes { Severity::High } else { Severity::Medium };
            let ev = std::iter::once(repo_ev.clone()).chain(account_ev()).collect();
            v.findings.push(ThreatFinding::new(comp(), ThreatCategory::CIPluginHallucination, severity, hijackable, ev));
        }
        (RefKind::Hallucinated, _) => {
            let ev = vec![repo_ev.clone(), format!("ref '{}' is neither a tag nor a branch", p.git_ref.as_deref().unwrap_or(""))];
            v.findings.push(ThreatFinding::new(comp(), ThreatCategory::CIPluginVersionHallucination, Severity::Medium, Hijackable::Unknown, ev));
        }
        (RefKind::MixedTagBranch, _) => {
            let ev = vec![repo_ev.clone(), format!("ref '{}' names both a tag and a branch", p.git_ref.as_deref().unwrap_or(""))];
            v.findings.push(ThreatFinding::new(comp(), ThreatCategory::CIPluginVersionReuse, Severity::Medium, Hijackable::No, ev));
        }
        (RefKind::Branch, _) => v.notes.push(format!("{key}: pinned to a mutable branch")),
        (RefKind::Unpinned, _) => v.notes.push(format!("{key}: no version pinned")),
        (RefKind::Tag | RefKind::CommitHash, _) => {}
    }
    if repo.status == ProbeStatus::Redirected {
        let target = repo.redirect_target.as_deref().unwrap_or("?");
        match account.map(|a| a.status) {
            Some(ProbeStatus::NotFound) => {
                let ev = std::iter::once(repo_ev).chain(account_ev()).collect();
                v.findings.push(ThreatFinding::new(comp(), ThreatCategory::CIPluginRedirectionHijack, Severity::High, Hijackable::Yes, ev));
            }
            Some(ProbeStatus::Exists | ProbeStatus::Redirected) => {
                v.notes.push(format!("{key}: redirected to {target}; old account {} still exists", p.owner))
            }
            _ => v.notes.push(format!("{key}: redirected to {target}; old account status unknown")),
        }
    }
    v
}

pub fn detect_deprecation(r: &PackageRef, o: &ProbeOutcome) -> Verdict {
    match o.status {
        ProbeStatus::Deprecated => Verdict::finding(ThreatFinding::new(
            ComponentRef::Package(r.clone()),
            ThreatCategory::PackageDeprecation,
            Severity::Medium,
            Hijackable::No,
            vec![probe_evidence(&pkg_subject(r), o)],
        )),
        ProbeStatus::Unreachable => Verdict::note(format!("{}: deprecation status unknown ({})", r.dedup_key(), o.evidence)),
        _ => Verdict::resolved(),
    }
}

/// Severity is the highest among the matched advisories.
pub fn detect_vulnerable_version(url: &str, detection: &LibraryDetection, advisories: &[&LibraryAdvisory]) -> Option<ThreatFinding> {
    let severity = advisories.iter().map(|a| a.severity).max()?;
    let mut evidence = vec![format!("{} {} detected from {url}", detection.library, detection.version)];
    for a in advisories {
        let ids = if a.identifiers.is_empty() { "no id".to_owned() } else { a.identifiers.join(", ") };
        let range = match (&a.at_or_above, &a.below) {
            (Some(lo), Some(hi)) => format!(">={lo} <{hi}"),
            (Some(lo), None) => format!(">={lo}"),
            (None, Some(hi)) => format!("<{hi}"),
            (None, None) => "any".into(),
        };
        evidence.push(format!("advisory {ids} ({}, {range}): {}", a.severity, a.summary));
    }
    let comp = ComponentRef::Library { url: url.to_owned(), detection: detection.clone() };
    Some(ThreatFinding::new(comp, ThreatCategory::VulnerableThirdPartyVersion, severity, Hijackable::No, evidence))
}

pub fn detect_vulnerable_ci(f: &InjectionFinding) -> ThreatFinding {
    let severity = match f.severity {
        InjectionSeverity::High => Severity::High,
        InjectionSeverity::Medium => Severity::Medium,
    };
    let sink = match f.sink {
        crate::ci::Sink::RunScript => "run script",
        crate::ci::Sink::ScriptInput => "script input",
    };
    let ev = vec![format!("job '{}' step {}: {} interpolated into {sink}", f.job, f.step, f.tainted_expression)];
    ThreatFinding::new(ComponentRef::Workflow { id: f.workflow.clone() }, ThreatCategory::VulnerableCIConfiguration, severity, Hijackable::No, ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::classify_plugin_ref;
    use crate::extract::{PluginOrigin, Registry, Span};
    use crate::probe::RefInventory;
    use chrono::{DateTime, Utc};

    fn at() -> DateTime<Utc> {
        DateTime::UNIX_EPOCH
    }

    fn pkg(name: &str) -> PackageRef {
        PackageRef::new(Registry::Npm, name, None, Span::new(0, 0))
    }

    fn plugin(owner: &str, r: &str) -> PluginRef {
        PluginRef { owner: owner.into(), repo: "p".into(), subpath: None, git_ref: Some(r.into()), origin: PluginOrigin { workflow: "w".into(), job: "j".into(), step: Some(0) } }
    }

    #[test]
    fn package_rules() {
        let v = detect_package_hallucination(&pkg("x"), &ProbeOutcome::not_found(Some(404), at(), "http 404"), true);
        assert_eq!(v.findings[0].category, ThreatCategory::PackageHallucination);
        assert_eq!(v.findings[0].hijackable, Hijackable::Yes);
        assert!(detect_package_hallucination(&pkg("x"), &ProbeOutcome::exists(200, at(), ""), true).findings.is_empty());
        let un = detect_package_hallucination(&pkg("x"), &ProbeOutcome::unreachable(at(), "exception: timeout"), true);
        assert!(!un.resolved && un.findings.is_empty());
    }

    #[test]
    fn domain_rules() {
        let u = UrlRef {
            url: "http://camanjs.com/caman.js".into(),
            host: "camanjs.com".into(),
            domain: "camanjs.com".into(),
            registrable: true,
            kind: crate::extract::UrlKind::Script,
            version_hint: None,
            origin: Span::new(0, 0),
        };
        let down = ProbeOutcome::unreachable(at(), "exception: connect");
        let f = detect_domain_hallucination(&u, &down, Some(Availability::Available));
        assert_eq!(f.findings[0].hijackable, Hijackable::Yes);
        let taken = detect_domain_hallucination(&u, &down, Some(Availability::Taken));
        assert!(taken.findings.is_empty() && !taken.notes.is_empty());
        assert_eq!(detect_domain_hallucination(&u, &down, Some(Availability::Unknown)).findings[0].hijackable, Hijackable::Unknown);
        assert!(detect_domain_hallucination(&u, &ProbeOutcome::exists(200, at(), ""), None).findings.is_empty());
        assert!(detect_absence(&u, &down).findings.is_empty());
    }

    #[test]
    fn plugin_rules() {
        let nf = ProbeOutcome::not_found(Some(404), at(), "");
        let ok = ProbeOutcome::exists(200, at(), "");
        let c = classify_plugin_ref(&plugin("ghost", "v1"), None);
        let v = detect_plugin_threats(&c, &nf, Some(&nf));
        assert_eq!((v.findings[0].category, v.findings[0].hijackable), (ThreatCategory::CIPluginHallucination, Hijackable::Yes));
        let inv = RefInventory { tags: ["v1.0.1".to_string()].into(), branches: ["v1.0.1".to_string()].into(), ..Default::default() };
        let c = classify_plugin_ref(&plugin("microsoft", "v1.0.1"), Some(&inv));
        assert_eq!(detect_plugin_threats(&c, &ok, None).findings[0].category, ThreatCategory::CIPluginVersionReuse);
        let moved = ProbeOutcome::redirected("new/p", Some(200), at(), "");
        let c = classify_plugin_ref(&plugin("old", "v1.0.1"), Some(&inv));
        let v = detect_plugin_threats(&c, &moved, Some(&ok));
        assert!(v.findings.iter().all(|f| f.category != ThreatCategory::CIPluginRedirectionHijack));
        assert!(v.notes.iter().any(|n| n.contains("still exists")));
    }

    #[test]
    fn vulnerable_version_takes_max_severity() {
        use crate::vulndb::{MatchedFrom, Version};
        let adv = |s: Severity| LibraryAdvisory {
            library: "axios".into(),
            below: Some(Version::parse("1.0.0").unwrap()),
            at_or_above: None,
            severity: s,
            identifiers: vec![],
            summary: String::new(),
            info: vec![],
        };
        let (m, h) = (adv(Severity::Medium), adv(Severity::High));
        let d = LibraryDetection { library: "axios".into(), version: "0.21.1".into(), matched_from: MatchedFrom::CdnRef };
        assert_eq!(detect_vulnerable_version("u", &d, &[&m, &h]).unwrap().severity, Severity::High);
        assert!(detect_vulnerable_version("u", &d, &[]).is_none());
    }

    #[test]
    fn category_ids_are_stable() {
        for c in ThreatCategory::ALL {
            assert_eq!(serde_json::to_value(c).unwrap(), serde_json::json!(c.as_str()));
        }
    }
}
