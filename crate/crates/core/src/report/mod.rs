//! Scan orchestration, configuration and report rendering.

mod config;
mod scan;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::probe::ProvenanceEntry;
use crate::threat::{CountMode, Hijackable, OverlapReport, ResponseAssessment, ScanMetrics, Severity, ThreatCategory};

pub use config::{CacheConfig, Config, ConfigError};
pub use scan::{ProbeMode, ScanError, ScanInput, Scanner};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputProvenance {
    pub id: String,
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub run_id: String,
    pub tool_version: String,
    pub vulndb_snapshot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_manifest: Option<String>,
    /// Absent in fixture mode so reports are reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<DateTime<Utc>>,
    pub count_mode: CountMode,
    pub inputs: Vec<InputProvenance>,
    pub responses: Vec<ResponseAssessment>,
    /// First answer to every probe, with where it came from.
    pub probes: Vec<ProvenanceEntry>,
    pub metrics: Vec<ScanMetrics>,
    /// Rates per value of one label, keyed by label name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub breakdowns: BTreeMap<String, Vec<ScanMetrics>>,
    /// Overlap of hallucinated package sets between models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapReport>,
    pub warnings: Vec<String>,
}

impl ScanReport {
    pub fn finding_count(&self) -> usize {
        self.responses.iter().map(|r| r.findings.len()).sum()
    }

    /// Every finding names a component of its response, and every component
    /// has an outcome or is marked unresolved. Returns the violations.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.responses {
            let keys: BTreeSet<&str> = r.components.iter().map(|c| c.key.as_str()).collect();
            let observed: BTreeSet<&str> = r.outcomes.iter().map(|o| o.component_key.as_str()).collect();
            for f in &r.findings {
                if !keys.contains(f.component_key.as_str()) {
                    out.push(format!("{}: finding on unknown component {}", r.response_id, f.component_key));
                }
            }
            for c in &r.components {
                if c.resolved && !observed.contains(c.key.as_str()) {
                    out.push(format!("{}: component {} has no outcome", r.response_id, c.key));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_markdown(&self) -> String {
        render_markdown(self)
    }
}

pub fn remediation(c: ThreatCategory) -> &'static str {
    match c {
        ThreatCategory::PackageHallucination => "Do not install it. Find the intended package on the registry; consider registering the name defensively.",
        ThreatCategory::DomainHallucination => "Remove the reference or host the resource yourself. The domain can be bought by anyone.",
        ThreatCategory::GitHubAccountHallucination => "Replace the link with the real project. The account name is free to register.",
        ThreatCategory::CIPluginHallucination => "Use an existing action from a verified publisher, pinned to a commit hash.",
        ThreatCategory::CIPluginVersionHallucination => "Pin to an existing release tag or, better, a full commit hash.",
        ThreatCategory::CIPluginVersionReuse => "Pin to a full commit hash; the ref names both a tag and a branch.",
        ThreatCategory::VulnerableThirdPartyVersion => "Upgrade to a version outside the advisory ranges.",
        ThreatCategory::VulnerableCIConfiguration => "Pass untrusted context through an environment variable instead of interpolating it into the script.",
        ThreatCategory::ResourceAbsence => "Remove the reference or replace it with a resource that exists.",
        ThreatCategory::PackageDeprecation => "Move to the maintained replacement named by the registry.",
        ThreatCategory::CIPluginRedirectionHijack => "Reference the new repository location, pinned to a commit hash.",
    }
}

fn badge(s: Severity) -> &'static str {
    match s {
        Severity::Low => "`LOW`",
        Severity::Medium => "`MEDIUM`",
        Severity::High => "`HIGH`",
        Severity::Critical => "`CRITICAL`",
    }
}

fn pct(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_owned(), |r| format!("{:.2}%", r * 100.0))
}

fn render_markdown(r: &ScanReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Scan report\n");
    let _ = writeln!(s, "- run: `{}`", r.run_id);
    let _ = writeln!(s, "- tool version: {}", r.tool_version);
    let _ = writeln!(s, "- vulnerability DB snapshot: `{}`", r.vulndb_snapshot);
    if let Some(h) = &r.fixture_manifest {
        let _ = writeln!(s, "- fixture manifest: `{h}`");
    }
    if let Some(t) = r.generated_at {
        let _ = writeln!(s, "- generated: {}", t.to_rfc3339());
    }
    let _ = writeln!(s, "- inputs: {}, responses: {}", r.inputs.len(), r.responses.len());

    let mut by_cat: BTreeMap<ThreatCategory, Vec<(&str, &crate::threat::ThreatFinding)>> = BTreeMap::new();
    for resp in &r.responses {
        for f in &resp.findings {
            by_cat.entry(f.category).or_default().push((resp.response_id.as_str(), f));
        }
    }
    if by_cat.is_empty() {
        let _ = writeln!(s, "\nNo findings.");
    }
    for c in ThreatCategory::ALL {
        let Some(findings) = by_cat.get(&c) else { continue };
        let _ = writeln!(s, "\n## {} ({})\n", c.title(), findings.len());
        let _ = writeln!(s, "Remediation: {}\n", remediation(c));
        for (resp, f) in findings {
            let hijack = match f.hijackable {
                Hijackable::Yes => ", takeover possible",
                Hijackable::No => "",
                Hijackable::Unknown => ", takeover unknown",
            };
            let _ = writeln!(s, "- {} `{}` in `{resp}`{hijack}", badge(f.severity), f.component_key);
            for e in &f.evidence {
                let _ = writeln!(s, "  - {e}");
            }
        }
    }

    if !r.metrics.is_empty() {
        let _ = writeln!(s, "\n## Rates\n");
        let _ = writeln!(s, "| category | basis | findings | resolved | unresolved | rate |");
        let _ = writeln!(s, "|---|---|---:|---:|---:|---:|");
        for m in &r.metrics {
            let _ = writeln!(s, "| {} | {} | {} | {} | {} | {} |", m.category, m.basis, m.numerator, m.denominator, m.unresolved, pct(m.rate));
        }
    }
    let notes: Vec<(&str, &str)> =
        r.responses.iter().flat_map(|resp| resp.notes.iter().map(move |n| (resp.response_id.as_str(), n.message.as_str()))).collect();
    if !notes.is_empty() {
        let _ = writeln!(s, "\n## Notes\n");
        for (resp, n) in notes {
            let _ = writeln!(s, "- `{resp}`: {n}");
        }
    }
    let diags: Vec<(&str, &str)> =
        r.responses.iter().flat_map(|resp| resp.diagnostics.iter().map(move |d| (resp.response_id.as_str(), d.message.as_str()))).collect();
    if !diags.is_empty() || !r.warnings.is_empty() {
        let _ = writeln!(s, "\n## Diagnostics\n");
        for w in &r.warnings {
            let _ = writeln!(s, "- {w}");
        }
        for (resp, d) in diags {
            let _ = writeln!(s, "- `{resp}`: {d}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> ScanReport {
        ScanReport {
            schema_version: SCHEMA_VERSION,
            run_id: "0".into(),
            tool_version: "t".into(),
            vulndb_snapshot: "h".into(),
            fixture_manifest: None,
            generated_at: None,
            count_mode: CountMode::PerResponse,
            inputs: vec![],
            responses: vec![],
            probes: vec![],
            metrics: vec![],
            breakdowns: BTreeMap::new(),
            overlap: None,
            warnings: vec![],
        }
    }

    #[test]
    fn empty_report_renders() {
        let r = empty();
        assert_eq!(ScanReport::from_json(&r.to_json()).unwrap(), r);
        let md = r.to_markdown();
        assert!(md.starts_with("# Scan report") && md.contains("No findings."));
        assert!(r.invariant_violations().is_empty());
    }

    #[test]
    fn remediation_text_is_plain() {
        for c in ThreatCategory::ALL {
            assert!(!remediation(c).is_empty());
            assert!(!remediation(c).contains('\u{2014}'));
        }
    }
}
