use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ComponentKind, ComponentRecord, ThreatCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMode {
    /// Each component counted once per response.
    #[default]
    PerResponse,
    /// Each occurrence in the response text counted.
    Occurrences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetrics {
    pub group: BTreeMap<String, String>,
    pub category: ThreatCategory,
    /// Component kind forming the denominator.
    pub basis: String,
    pub numerator: usize,
    /// Resolved components of the basis kind.
    pub denominator: usize,
    /// Components of the basis kind left out because their status is unknown.
    pub unresolved: usize,
    /// `None` when the denominator is zero.
    pub rate: Option<f64>,
}

/// Rates per group and category. `group_by` names component labels (for
/// example `model`, `ecosystem`, `prompt_set`); a missing label groups as `-`.
pub fn compute_metrics(components: &[ComponentRecord], group_by: &[&str], mode: CountMode) -> Vec<ScanMetrics> {
    #[derive(Default)]
    struct Tally {
        resolved: usize,
        unresolved: usize,
        hits: BTreeMap<ThreatCategory, usize>,
    }
    let mut tallies: BTreeMap<(BTreeMap<String, String>, ComponentKind), Tally> = BTreeMap::new();
    for c in components {
        let group: BTreeMap<String, String> =
            group_by.iter().map(|k| ((*k).to_owned(), c.labels.get(*k).cloned().unwrap_or_else(|| "-".into()))).collect();
        let weight = match mode {
            CountMode::PerResponse => 1,
            CountMode::Occurrences => c.occurrences.max(1),
        };
        let t = tallies.entry((group, c.kind)).or_default();
        if !c.resolved {
            t.unresolved += weight;
            continue;
        }
        t.resolved += weight;
        for cat in &c.categories {
            *t.hits.entry(*cat).or_default() += weight;
        }
    }
    let groups: BTreeSet<BTreeMap<String, String>> = tallies.keys().map(|(g, _)| g.clone()).collect();
    let mut out = Vec::new();
    for group in groups {
        for category in ThreatCategory::ALL {
            for kind in category.bases() {
                let Some(t) = tallies.get(&(group.clone(), *kind)) else { continue };
                let numerator = t.hits.get(&category).copied().unwrap_or(0);
                out.push(ScanMetrics {
                    group: group.clone(),
                    category,
                    basis: kind.basis().to_owned(),
                    numerator,
                    denominator: t.resolved,
                    unresolved: t.unresolved,
                    rate: (t.resolved > 0).then(|| numerator as f64 / t.resolved as f64),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapEntry {
    pub a: String,
    pub b: String,
    pub intersection: usize,
    pub union: usize,
    pub rate: f64,
    /// Set when both sets are empty; the rate is 0 by convention.
    pub empty: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub pairwise: Vec<OverlapEntry>,
    pub family: Vec<OverlapEntry>,
}

fn jaccard(a: &str, b: &str, x: &BTreeSet<String>, y: &BTreeSet<String>) -> OverlapEntry {
    let intersection = x.intersection(y).count();
    let union = x.union(y).count();
    OverlapEntry {
        a: a.to_owned(),
        b: b.to_owned(),
        intersection,
        union,
        rate: if union == 0 { 0.0 } else { intersection as f64 / union as f64 },
        empty: union == 0,
    }
}

fn all_pairs(sets: &BTreeMap<String, BTreeSet<String>>) -> Vec<OverlapEntry> {
    let names: Vec<&String> = sets.keys().collect();
    let mut out = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            out.push(jaccard(a, b, &sets[*a], &sets[*b]));
        }
    }
    out
}

/// Model family: the id up to the first `-`, `:` or `/`.
pub fn default_family(model: &str) -> String {
    model.split(['-', ':', '/']).next().unwrap_or(model).to_owned()
}

/// Jaccard overlap of per-model component sets, pairwise and between model
/// families (family sets are unions of their models' sets).
pub fn compute_overlap(sets: &BTreeMap<String, BTreeSet<String>>, family_of: impl Fn(&str) -> String) -> OverlapReport {
    let mut families: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (model, set) in sets {
        families.entry(family_of(model)).or_default().extend(set.iter().cloned());
    }
    OverlapReport { pairwise: all_pairs(sets), family: all_pairs(&families) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(kind: ComponentKind, resolved: bool, cats: &[ThreatCategory], labels: &[(&str, &str)]) -> ComponentRecord {
        ComponentRecord {
            response: "r".into(),
            key: "k".into(),
            kind,
            resolved,
            occurrences: 1,
            labels: labels.iter().map(|(k, v)| ((*k).into(), (*v).into())).collect(),
            categories: cats.iter().copied().collect(),
        }
    }

    fn row<'a>(m: &'a [ScanMetrics], c: ThreatCategory, basis: &str) -> &'a ScanMetrics {
        m.iter().find(|r| r.category == c && r.basis == basis).unwrap()
    }

    #[test]
    fn explicit_denominator() {
        let mut comps: Vec<ComponentRecord> = (0..1952)
            .map(|i| {
                let cats: &[ThreatCategory] = if i < 146 { &[ThreatCategory::PackageHallucination] } else { &[] };
                record(ComponentKind::Package, true, cats, &[])
            })
            .collect();
        comps.push(record(ComponentKind::Package, false, &[], &[]));
        let m = compute_metrics(&comps, &[], CountMode::PerResponse);
        let r = row(&m, ThreatCategory::PackageHallucination, "packages");
        assert_eq!((r.numerator, r.denominator, r.unresolved), (146, 1952, 1));
        assert!((r.rate.unwrap() - 0.0748).abs() < 5e-5);
        assert_eq!(row(&m, ThreatCategory::PackageDeprecation, "packages").rate, Some(0.0));
    }

    #[test]
    fn unresolved_only_group_is_undefined() {
        let comps = vec![
            record(ComponentKind::Url, false, &[], &[("model", "a")]),
            record(ComponentKind::Url, true, &[ThreatCategory::ResourceAbsence], &[("model", "b")]),
        ];
        let m = compute_metrics(&comps, &["model"], CountMode::PerResponse);
        let a = m.iter().find(|r| r.group["model"] == "a" && r.category == ThreatCategory::ResourceAbsence).unwrap();
        assert_eq!(a.rate, None);
        let b = m.iter().find(|r| r.group["model"] == "b" && r.category == ThreatCategory::ResourceAbsence).unwrap();
        assert_eq!(b.rate, Some(1.0));
    }

    #[test]
    fn vulnerable_versions_have_two_bases() {
        let comps = vec![
            record(ComponentKind::Url, true, &[ThreatCategory::VulnerableThirdPartyVersion], &[]),
            record(ComponentKind::Url, true, &[], &[]),
            record(ComponentKind::Url, true, &[], &[]),
            record(ComponentKind::Library, true, &[ThreatCategory::VulnerableThirdPartyVersion], &[]),
        ];
        let m = compute_metrics(&comps, &[], CountMode::PerResponse);
        assert_eq!(row(&m, ThreatCategory::VulnerableThirdPartyVersion, "urls").denominator, 3);
        assert_eq!(row(&m, ThreatCategory::VulnerableThirdPartyVersion, "detected-libraries").rate, Some(1.0));
    }

    #[test]
    fn occurrence_mode_weights() {
        let mut c = record(ComponentKind::Package, true, &[ThreatCategory::PackageHallucination], &[]);
        c.occurrences = 3;
        let comps = vec![c, record(ComponentKind::Package, true, &[], &[])];
        let dedup = compute_metrics(&comps, &[], CountMode::PerResponse);
        let raw = compute_metrics(&comps, &[], CountMode::Occurrences);
        assert_eq!(row(&dedup, ThreatCategory::PackageHallucination, "packages").rate, Some(0.5));
        assert_eq!(row(&raw, ThreatCategory::PackageHallucination, "packages").rate, Some(0.75));
    }

    #[test]
    fn jaccard_cases() {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
        let mut sets = BTreeMap::new();
        sets.insert("gpt-4o".to_string(), s(&["a", "b"]));
        sets.insert("gpt-3.5".to_string(), s(&["b", "c"]));
        sets.insert("llama-3".to_string(), s(&["a", "b"]));
        sets.insert("empty-1".to_string(), s(&[]));
        sets.insert("empty-2".to_string(), s(&[]));
        let r = compute_overlap(&sets, default_family);
        let get = |a: &str, b: &str| r.pairwise.iter().find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a)).unwrap();
        assert!((get("gpt-4o", "gpt-3.5").rate - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(get("gpt-4o", "llama-3").rate, 1.0);
        assert_eq!(get("gpt-3.5", "empty-1").rate, 0.0);
        assert!(get("empty-1", "empty-2").empty);
        let fam = r.family.iter().find(|e| (e.a == "gpt" && e.b == "llama") || (e.a == "llama" && e.b == "gpt")).unwrap();
        assert!((fam.rate - 2.0 / 3.0).abs() < 1e-12);
    }
}
