use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{
    detect_absence, detect_account_hallucination, detect_cdn_package_hallucination, detect_deprecation, detect_domain_hallucination,
    detect_package_hallucination, detect_plugin_threats, detect_vulnerable_ci, detect_vulnerable_version, ComponentKind, ComponentRef,
    ThreatCategory, ThreatFinding, Verdict,
};
use crate::ci::{classify_plugin_ref, needs_inventory, InjectionAnalyzer, RefClassification, RefKind};
use crate::domain::registrable_domain;
use crate::extract::{Diagnostic, Extraction, PackageRef, UrlKind};
use crate::probe::{Availability, ProbeError, ProbeOutcome, ProbeStatus, Prober, RefInventory, RefListing};
use crate::vulndb::{LibrarySource, VulnDb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessOptions {
    /// Count incomplete Packagist names as package hallucinations (default)
    /// instead of only noting them.
    pub count_incomplete: bool,
}

impl Default for AssessOptions {
    fn default() -> Self {
        Self { count_incomplete: true }
    }
}

/// One distinct component of one response, with the categories found on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub response: String,
    pub key: String,
    pub kind: ComponentKind,
    pub resolved: bool,
    pub occurrences: usize,
    pub labels: BTreeMap<String, String>,
    pub categories: BTreeSet<ThreatCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub component_key: String,
    pub message: String,
}

/// What was observed about a component: a probe status, an analyzer run or
/// a database match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentOutcome {
    pub component_key: String,
    pub check: String,
    pub status: String,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseAssessment {
    pub response_id: String,
    pub labels: BTreeMap<String, String>,
    pub components: Vec<ComponentRecord>,
    pub findings: Vec<ThreatFinding>,
    pub outcomes: Vec<ComponentOutcome>,
    pub notes: Vec<Note>,
    pub diagnostics: Vec<Diagnostic>,
}

struct Builder<'a> {
    response: &'a str,
    labels: &'a BTreeMap<String, String>,
    index: HashMap<String, usize>,
    out: ResponseAssessment,
}

impl Builder<'_> {
    /// Registers an occurrence; returns `true` the first time a key is seen.
    fn component(&mut self, key: &str, kind: ComponentKind, ecosystem: Option<&str>) -> bool {
        if let Some(&i) = self.index.get(key) {
            self.out.components[i].occurrences += 1;
            return false;
        }
        let mut labels = self.labels.clone();
        if let Some(e) = ecosystem {
            labels.insert("ecosystem".into(), e.to_owned());
        }
        self.index.insert(key.to_owned(), self.out.components.len());
        self.out.components.push(ComponentRecord {
            response: self.response.to_owned(),
            key: key.to_owned(),
            kind,
            resolved: true,
            occurrences: 1,
            labels,
            categories: BTreeSet::new(),
        });
        true
    }

    fn apply(&mut self, key: &str, v: Verdict) {
        let i = self.index[key];
        let rec = &mut self.out.components[i];
        rec.resolved &= v.resolved;
        rec.categories.extend(v.findings.iter().map(|f| f.category));
        self.out.notes.extend(v.notes.into_iter().map(|message| Note { component_key: key.to_owned(), message }));
        self.out.findings.extend(v.findings);
    }

    fn observe(&mut self, key: &str, check: &str, o: &ProbeOutcome) {
        self.record(key, check, &o.status.to_string(), &o.evidence);
    }

    fn record(&mut self, key: &str, check: &str, status: &str, evidence: &str) {
        self.out.outcomes.push(ComponentOutcome {
            component_key: key.to_owned(),
            check: check.to_owned(),
            status: status.to_owned(),
            evidence: evidence.to_owned(),
        });
    }

    fn mark(&mut self, key: &str, category: ThreatCategory) {
        let i = self.index[key];
        self.out.components[i].categories.insert(category);
    }
}

/// Routes one response's extraction through the probes and detectors.
pub struct Assessor<'a> {
    pub prober: &'a Prober,
    pub db: &'a VulnDb,
    pub analyzer: &'a dyn InjectionAnalyzer,
    pub options: AssessOptions,
}

impl Assessor<'_> {
    pub fn assess(&self, response_id: &str, x: &Extraction, labels: &BTreeMap<String, String>) -> Result<ResponseAssessment, ProbeError> {
        let mut b = Builder {
            response: response_id,
            labels,
            index: HashMap::new(),
            out: ResponseAssessment {
                response_id: response_id.to_owned(),
                labels: labels.clone(),
                components: Vec::new(),
                findings: Vec::new(),
                outcomes: Vec::new(),
                notes: Vec::new(),
                diagnostics: x.diagnostics.clone(),
            },
        };
        self.packages(&mut b, x)?;
        let hallucinated_cdn = self.cdn_packages(&mut b, x)?;
        self.urls(&mut b, x, &hallucinated_cdn)?;
        self.repos(&mut b, x)?;
        self.plugins(&mut b, x)?;
        self.workflows(&mut b, x);
        Ok(b.out)
    }

    fn packages(&self, b: &mut Builder<'_>, x: &Extraction) -> Result<(), ProbeError> {
        for r in &x.packages {
            let key = r.dedup_key();
            if !b.component(&key, ComponentKind::Package, Some(r.registry.as_str())) {
                continue;
            }
            let o = self.prober.probe_package(r)?;
            b.observe(&key, "registry", &o);
            let mut v = detect_package_hallucination(r, &o, self.options.count_incomplete);
            if o.status == ProbeStatus::Exists && r.registry.has_deprecation_mark() {
                let d = self.prober.probe_deprecation(r)?;
                b.observe(&key, "deprecation", &d);
                v.merge(detect_deprecation(r, &d));
            }
            b.apply(&key, v);
        }
        Ok(())
    }

    /// Returns the URLs whose CDN package does not exist.
    fn cdn_packages(&self, b: &mut Builder<'_>, x: &Extraction) -> Result<BTreeSet<String>, ProbeError> {
        let mut missing = BTreeSet::new();
        for c in &x.cdn_packages {
            let Some(registry) = c.registry else { continue };
            let key = c.dedup_key();
            if !b.component(&key, ComponentKind::Package, Some(registry.as_str())) {
                continue;
            }
            let probe_ref = PackageRef::new(registry, c.package.clone(), c.version.clone(), c.origin);
            let o = self.prober.probe_package(&probe_ref)?;
            b.observe(&key, "registry", &o);
            if o.status == ProbeStatus::NotFound {
                missing.insert(c.url.clone());
            }
            b.apply(&key, detect_cdn_package_hallucination(c, &o));
        }
        Ok(missing)
    }

    fn urls(&self, b: &mut Builder<'_>, x: &Extraction, hallucinated_cdn: &BTreeSet<String>) -> Result<(), ProbeError> {
        for u in x.urls.iter().filter(|u| u.kind != UrlKind::Repo) {
            let key = u.dedup_key();
            if !b.component(&key, ComponentKind::Url, None) {
                continue;
            }
            let o = self.prober.probe_url(u)?;
            b.observe(&key, "http", &o);
            let v = match o.status {
                ProbeStatus::Unreachable => {
                    let availability = match registrable_domain(&u.host) {
                        Some(d) => {
                            let a = self.prober.probe_domain_availability(&d)?;
                            let status = match a {
                                Availability::Available => "available",
                                Availability::Taken => "taken",
                                Availability::Unknown => "unknown",
                            };
                            b.record(&key, "domain-availability", status, &d);
                            Some(a)
                        }
                        None => None,
                    };
                    detect_domain_hallucination(u, &o, availability)
                }
                ProbeStatus::NotFound if hallucinated_cdn.contains(&u.url) => {
                    Verdict { resolved: true, notes: vec![format!("{key}: 404 attributed to the hallucinated CDN package")], findings: vec![] }
                }
                _ => detect_absence(u, &o),
            };
            b.apply(&key, v);

            let cdn = x.cdn_packages.iter().find(|c| c.url == u.url);
            let detection = match cdn {
                Some(c) => self.db.detect(LibrarySource::Cdn(c)).or_else(|| self.db.detect(LibrarySource::Url(u))),
                None => self.db.detect(LibrarySource::Url(u)),
            };
            let Some(d) = detection else { continue };
            let lib = ComponentRef::Library { url: u.url.clone(), detection: d.clone() };
            let lib_key = lib.key();
            let first = b.component(&lib_key, ComponentKind::Library, None);
            match self.db.match_detection(&d) {
                Ok(advisories) => {
                    if first {
                        let ids: Vec<&str> = advisories.iter().flat_map(|a| a.identifiers.iter().map(String::as_str)).collect();
                        let status = if advisories.is_empty() { "no-advisory" } else { "vulnerable" };
                        b.record(&lib_key, "vulndb", status, &ids.join(", "));
                    }
                    if let Some(f) = detect_vulnerable_version(&u.url, &d, &advisories) {
                        b.mark(&key, ThreatCategory::VulnerableThirdPartyVersion);
                        if first {
                            b.apply(&lib_key, Verdict::finding(f));
                        }
                    }
                }
                Err(e) => {
                    if first {
                        b.record(&lib_key, "vulndb", "unmatchable", &e.to_string());
                    }
                    b.apply(&lib_key, Verdict::unresolved(e.to_string()))
                }
            }
        }
        Ok(())
    }

    fn repos(&self, b: &mut Builder<'_>, x: &Extraction) -> Result<(), ProbeError> {
        for r in &x.repos {
            let key = r.dedup_key();
            if !b.component(&key, ComponentKind::Repo, None) {
                continue;
            }
            let o = self.prober.probe_repo(&r.owner, &r.repo)?;
            b.observe(&key, "github-repo", &o);
            let account = match o.status {
                ProbeStatus::NotFound => Some(self.prober.probe_github_account(&r.owner)?),
                _ => None,
            };
            if let Some(a) = &account {
                b.observe(&key, "github-account", a);
            }
            b.apply(&key, detect_account_hallucination(r, &o, account.as_ref()));
        }
        Ok(())
    }

    fn plugins(&self, b: &mut Builder<'_>, x: &Extraction) -> Result<(), ProbeError> {
        for p in &x.plugins {
            let key = p.dedup_key();
            if !b.component(&key, ComponentKind::Plugin, None) {
                continue;
            }
            let repo = self.prober.probe_repo(&p.owner, &p.repo)?;
            b.observe(&key, "github-repo", &repo);
            let v = match repo.status {
                ProbeStatus::Unreachable => Verdict::unresolved(format!("{key}: unresolved ({})", repo.evidence)),
                ProbeStatus::NotFound => {
                    let account = self.prober.probe_github_account(&p.owner)?;
                    b.observe(&key, "github-account", &account);
                    detect_plugin_threats(&classify_plugin_ref(p, None), &repo, Some(&account))
                }
                _ => {
                    let account = match repo.status {
                        ProbeStatus::Redirected => Some(self.prober.probe_github_account(&p.owner)?),
                        _ => None,
                    };
                    if let Some(a) = &account {
                        b.observe(&key, "github-account", a);
                    }
                    let inventory = if needs_inventory(p) {
                        match self.prober.list_refs(&p.owner, &p.repo)? {
                            RefListing::Inventory(inv) => {
                                let summary = format!("{} tags, {} branches", inv.tags.len(), inv.branches.len());
                                b.record(&key, "github-refs", "listed", &summary);
                                Some(inv)
                            }
                            RefListing::Unavailable(o) => {
                                b.observe(&key, "github-refs", &o);
                                b.apply(&key, Verdict::unresolved(format!("{key}: refs unavailable ({})", o.evidence)));
                                None
                            }
                        }
                    } else {
                        Some(RefInventory { owner: p.owner.clone(), repo: p.repo.clone(), ..Default::default() })
                    };
                    match inventory {
                        Some(inv) => detect_plugin_threats(&classify_plugin_ref(p, Some(&inv)), &repo, account.as_ref()),
                        // Ref kind unknown; redirect threats can still be reported.
                        None => {
                            let c = RefClassification { plugin: p.clone(), kind: RefKind::CommitHash, hallucinated: None };
                            let mut v = detect_plugin_threats(&c, &repo, account.as_ref());
                            v.resolved = false;
                            v
                        }
                    }
                }
            };
            b.apply(&key, v);
        }
        Ok(())
    }

    fn workflows(&self, b: &mut Builder<'_>, x: &Extraction) {
        for doc in &x.workflows {
            let comp = ComponentRef::Workflow { id: doc.id.clone() };
            let key = comp.key();
            b.component(&key, ComponentKind::Workflow, None);
            match self.analyzer.analyze(doc) {
                Ok(found) => {
                    b.record(&key, "ci-analyzer", "analyzed", &format!("{} injection finding(s)", found.len()));
                    let findings = found.iter().map(detect_vulnerable_ci).collect();
                    b.apply(&key, Verdict { findings, notes: Vec::new(), resolved: true });
                }
                Err(e) => {
                    b.record(&key, "ci-analyzer", "failed", &e);
                    b.apply(&key, Verdict::unresolved(format!("{key}: analyzer failed: {e}")))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::PatternAnalyzer;
    use crate::extract::Extractor;
    use crate::probe::{FixedClock, FixtureArchive, ProbeConfig, ReplayTransport, StaticAvailability, Availability, TransportError};
    use serde_json::json;
    use std::sync::Arc;

    fn t0() -> chrono::DateTime<chrono::Utc> {
        "2025-03-01T00:00:00Z".parse().unwrap()
    }

    #[test]
    fn mixed_response_routing() {
        let response = "Install:\n```bash\nnpm install left-pad ghost-pkg\n```\n```html\n<script src=\"https://camanjs.com/caman.full.min.js\"></script>\n<script src=\"https://code.jquery.com/jquery-1.8.3.min.js\"></script>\n```\nSee https://github.com/gradle-php/gradle-php-plugin for more.\n";
        let mut a = FixtureArchive::new(t0());
        a.respond_json("https://registry.npmjs.org/left-pad", 200, &json!({"dist-tags": {"latest": "1.3.0"}, "versions": {"1.3.0": {"deprecated": "use String.prototype.padStart()"}}}));
        a.respond("https://registry.npmjs.org/ghost-pkg", 404, "");
        a.fail("https://camanjs.com/caman.full.min.js", TransportError::Connect("dns".into()));
        a.respond("https://code.jquery.com/jquery-1.8.3.min.js", 200, "");
        a.respond("https://api.github.com/repos/gradle-php/gradle-php-plugin", 404, "");
        a.respond("https://api.github.com/users/gradle-php", 404, "");
        let prober = Prober::new(Arc::new(ReplayTransport::new(a)), ProbeConfig::default(), Arc::new(FixedClock(t0())))
            .with_availability(Arc::new(StaticAvailability::default().with("camanjs.com", Availability::Available)));
        let db = VulnDb::bundled();
        let analyzer = PatternAnalyzer::default();
        let assessor = Assessor { prober: &prober, db: &db, analyzer: &analyzer, options: AssessOptions::default() };
        let x = Extractor::default().extract_all(response);
        let r = assessor.assess("r1", &x, &BTreeMap::new()).unwrap();
        let cats: BTreeSet<ThreatCategory> = r.findings.iter().map(|f| f.category).collect();
        let expected: BTreeSet<ThreatCategory> = [
            ThreatCategory::PackageHallucination,
            ThreatCategory::PackageDeprecation,
            ThreatCategory::DomainHallucination,
            ThreatCategory::VulnerableThirdPartyVersion,
            ThreatCategory::GitHubAccountHallucination,
        ]
        .into();
        assert_eq!(cats, expected);
        assert!(r.findings.iter().all(ThreatFinding::is_well_formed));
        assert!(r.components.iter().all(|c| c.resolved));
    }
}
