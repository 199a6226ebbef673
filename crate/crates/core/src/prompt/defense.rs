use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gateway::{GatewayError, LlmGateway};
use super::{render, CorpusError, Question, SetLabel, Templates};
use crate::extract::{Extractor, PackageRef, Registry, Span};
use crate::probe::{ProbeError, ProbeStatus, Prober};
use crate::threat::{detect_package_hallucination, ThreatCategory};

/// Reads the leading word of an answer: lowercased, punctuation stripped,
/// and only `yes` or `no` count.
pub fn parse_yes_no(answer: &str) -> Option<bool> {
    let word: String = answer.split_whitespace().next()?.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
    match word.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum DescCotOutcome {
    Accepted,
    /// `step` is 1-based; it is also the number of questions asked.
    Rejected { step: u8, answer: String },
    Indeterminate { step: u8, answer: String },
}

impl DescCotOutcome {
    pub fn accepted(&self) -> bool {
        matches!(self, DescCotOutcome::Accepted)
    }

    pub fn calls(&self) -> u8 {
        match self {
            DescCotOutcome::Accepted => 3,
            DescCotOutcome::Rejected { step, .. } | DescCotOutcome::Indeterminate { step, .. } => *step,
        }
    }
}

/// Three-question tag filter; a tag passes on yes, yes, no.
pub fn desc_cot_filter(tag: &str, description: &str, gw: &dyn LlmGateway) -> Result<DescCotOutcome, GatewayError> {
    let t = Templates::bundled();
    let wanted = [("Q1", true), ("Q2", true), ("Q3", false)];
    for (i, (key, want)) in wanted.into_iter().enumerate() {
        let step = i as u8 + 1;
        let prompt = render(&t.desc_cot[key], &[("tag_name", tag), ("description", description)]);
        let answer = gw.submit(&prompt)?.text;
        match parse_yes_no(&answer) {
            None => return Ok(DescCotOutcome::Indeterminate { step, answer }),
            Some(a) if a != want => return Ok(DescCotOutcome::Rejected { step, answer }),
            Some(_) => {}
        }
    }
    Ok(DescCotOutcome::Accepted)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRecord {
    pub tag_name: String,
    pub description: String,
}

impl TagRecord {
    /// JSON array or CSV with `tag_name,description` columns.
    pub fn load(path: &Path) -> Result<Vec<TagRecord>, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            return Ok(csv::Reader::from_reader(text.as_bytes()).deserialize().collect::<Result<_, _>>()?);
        }
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs the tag filter over a tag corpus. Tags with an empty description
/// are reported indeterminate without asking.
pub fn filter_tags(tags: &[TagRecord], gw: &dyn LlmGateway) -> Result<Vec<(TagRecord, DescCotOutcome)>, GatewayError> {
    tags.iter()
        .map(|t| {
            let outcome = if t.description.trim().is_empty() {
                DescCotOutcome::Indeterminate { step: 0, answer: "empty description".into() }
            } else {
                desc_cot_filter(&t.tag_name, &t.description, gw)?
            };
            Ok((t.clone(), outcome))
        })
        .collect()
}

/// The Q2 prompt for `q` followed by defense instruction 1 or 2.
pub fn single_prompt_defense(q: &Question, variant: u8) -> Option<String> {
    let t = Templates::bundled();
    let suffix = match variant {
        1 => &t.defense["SP1"],
        2 => &t.defense["SP2"],
        _ => return None,
    };
    Some(render(t.set(SetLabel::Q2), &[("question", &q.text())]) + suffix)
}

fn registry_word(token: &str) -> Option<Registry> {
    match token.to_ascii_lowercase().as_str() {
        "npm" => Some(Registry::Npm),
        "pypi" | "pip" => Some(Registry::PyPI),
        "packagist" | "composer" => Some(Registry::Packagist),
        "rubygems" | "gem" | "gems" => Some(Registry::RubyGems),
        "cpan" | "metacpan" => Some(Registry::Cpan),
        _ => None,
    }
}

const LABEL_WORDS: [&str; 6] = ["package", "packages", "registry", "name", "from", "in"];

/// Reads `(package, registry)` pairs from a free-form Step 1 answer. Each
/// line needs a registry word; the package is the first other token on it,
/// so `- lodash (npm)`, `lodash: npm`, `| lodash | npm |` and
/// `Package: lodash, Registry: npm` all work.
pub fn parse_extracted_packages(answer: &str) -> Vec<(String, Registry)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for line in answer.lines() {
        let tokens: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || ",|():`*\"'".contains(c))
            .map(|t| t.trim_matches(|c: char| c == '.' || c == '-' || c == '–'))
            .filter(|t| !t.is_empty())
            .collect();
        let Some((ri, registry)) = tokens.iter().enumerate().find_map(|(i, t)| registry_word(t).map(|r| (i, r))) else { continue };
        let name = tokens.iter().enumerate().find(|(i, t)| {
            *i != ri && !LABEL_WORDS.contains(&t.to_ascii_lowercase().as_str()) && !t.chars().all(|c| c.is_ascii_digit())
        });
        if let Some((_, name)) = name {
            if seen.insert((registry, name.to_string())) {
                out.push((name.to_string(), registry));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocStep {
    pub label: SetLabel,
    pub prompt: String,
    pub response: String,
}

/// A Step 2 answer that was unusable or contradicted the registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub package: String,
    pub registry: Registry,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeStatus>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocMetrics {
    /// Packages our extractor finds in the baseline response.
    pub baseline_packages: usize,
    pub baseline_hallucinated: Option<usize>,
    /// Packages listed by the model in Step 1.
    pub extracted: usize,
    pub confirmed: usize,
    /// Packages our extractor finds in the regenerated response.
    pub final_packages: usize,
    pub final_hallucinated: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocOutcome {
    pub question_id: String,
    pub baseline: String,
    pub final_response: String,
    pub steps: Vec<CocStep>,
    pub confirmed: Vec<(String, Registry)>,
    pub metrics: CocMetrics,
    pub disagreements: Vec<Disagreement>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CocError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

fn response_packages(text: &str) -> Vec<PackageRef> {
    let mut seen = BTreeSet::new();
    Extractor::default().extract_all(text).packages.into_iter().filter(|p| seen.insert((p.registry, p.name.clone()))).collect()
}

fn count_hallucinated(pkgs: &[PackageRef], prober: &Prober) -> Result<usize, ProbeError> {
    let mut n = 0;
    for p in pkgs {
        let o = prober.probe_package(p)?;
        if detect_package_hallucination(p, &o, true).findings.iter().any(|f| f.category == ThreatCategory::PackageHallucination) {
            n += 1;
        }
    }
    Ok(n)
}

/// Extract, confirm, regenerate. Without `baseline` a Q2 prompt is sent
/// first. The hallucination counts need `verifier`, which also cross-checks
/// each Step 2 answer against the registry.
pub fn chain_of_confirmation(q: &Question, baseline: Option<&str>, gw: &dyn LlmGateway, verifier: Option<&Prober>) -> Result<CocOutcome, CocError> {
    let t = Templates::bundled();
    let mut steps = Vec::new();
    let mut diagnostics = Vec::new();
    let mut disagreements = Vec::new();
    let question = q.text();

    let baseline = match baseline {
        Some(b) => b.to_owned(),
        None => {
            let prompt = render(t.set(SetLabel::Q2), &[("question", &question)]);
            let text = gw.submit(&prompt)?.text;
            steps.push(CocStep { label: SetLabel::Q2, prompt, response: text.clone() });
            text
        }
    };
    let baseline_pkgs = response_packages(&baseline);

    let prompt = render(&t.coc["extract"], &[("baseline_code", &baseline)]);
    let answer = gw.submit(&prompt)?.text;
    steps.push(CocStep { label: SetLabel::CoC1, prompt, response: answer.clone() });
    let extracted = parse_extracted_packages(&answer);
    let ours: BTreeSet<(Registry, &str)> = baseline_pkgs.iter().map(|p| (p.registry, p.name.as_str())).collect();
    let theirs: BTreeSet<(Registry, &str)> = extracted.iter().map(|(n, r)| (*r, n.as_str())).collect();
    for (r, n) in ours.difference(&theirs) {
        diagnostics.push(format!("step 1 omitted {r}/{n}"));
    }
    for (r, n) in theirs.difference(&ours) {
        diagnostics.push(format!("step 1 listed {r}/{n}, not installed in the baseline"));
    }

    let mut confirmed = Vec::new();
    for (name, registry) in &extracted {
        let prompt = render(&t.coc["confirm"], &[("package_name", name), ("registry", registry.display_name())]);
        let answer = gw.submit(&prompt)?.text;
        steps.push(CocStep { label: SetLabel::CoC2, prompt, response: answer.clone() });
        let says = parse_yes_no(&answer);
        let probe = match verifier {
            Some(v) => Some(v.probe_package(&PackageRef::new(*registry, name.clone(), None, Span::new(0, 0)))?.status),
            None => None,
        };
        let mut disagree = |reason: &str| {
            disagreements.push(Disagreement { package: name.clone(), registry: *registry, answer: answer.clone(), probe, reason: reason.into() })
        };
        match (says, probe) {
            (None, _) => disagree("answer is neither yes nor no"),
            (Some(true), Some(ProbeStatus::NotFound)) => disagree("confirmed but not in the registry"),
            (Some(false), Some(ProbeStatus::Exists | ProbeStatus::Deprecated)) => disagree("rejected but present in the registry"),
            _ => {}
        }
        if says == Some(true) {
            confirmed.push((name.clone(), *registry));
        }
    }

    let list = confirmed.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(", ");
    let prompt = render(&t.coc["regenerate"], &[("packages", &list), ("original_question", &question)]);
    let final_response = gw.submit(&prompt)?.text;
    steps.push(CocStep { label: SetLabel::CoC3, prompt, response: final_response.clone() });
    let final_pkgs = response_packages(&final_response);
    let allowed: BTreeSet<(Registry, &str)> = confirmed.iter().map(|(n, r)| (*r, n.as_str())).collect();
    for p in &final_pkgs {
        if !allowed.contains(&(p.registry, p.name.as_str())) {
            diagnostics.push(format!("final response added {}/{}", p.registry, p.name));
        }
    }

    let (baseline_hallucinated, final_hallucinated) = match verifier {
        Some(v) => (Some(count_hallucinated(&baseline_pkgs, v)?), Some(count_hallucinated(&final_pkgs, v)?)),
        None => (None, None),
    };
    Ok(CocOutcome {
        question_id: q.id.clone(),
        baseline,
        final_response,
        steps,
        metrics: CocMetrics {
            baseline_packages: baseline_pkgs.len(),
            baseline_hallucinated,
            extracted: extracted.len(),
            confirmed: confirmed.len(),
            final_packages: final_pkgs.len(),
            final_hallucinated,
        },
        confirmed,
        disagreements,
        diagnostics,
    })
}
