//! CI workflow analysis: expression-injection detection and plugin version
//! classification.

mod catalog;
mod classify;
mod injection;

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use serde::{Deserialize, Serialize};
use serde_yaml::Value;
use thiserror::Error;

pub use catalog::{CiCatalog, ScriptSink};
pub use classify::{classify_plugin_ref, is_commit_hash, needs_inventory, HallucinatedPart, RefClassification, RefKind};
pub use injection::{
    detect_code_injection, interpolate_expressions, normalize_context_path, ExternalAnalyzer, InjectionAnalyzer,
    InjectionFinding, InjectionSeverity, PatternAnalyzer, Sink,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkflowError {
    #[error("not a workflow document")]
    NotAWorkflow,
    #[error("invalid YAML: {0}")]
    Yaml(String),
    #[error("`jobs` is not a mapping")]
    JobsNotMapping,
    #[error("workflow has no jobs")]
    NoJobs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    /// Zero-based position within the job.
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uses: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub with: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub env: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    /// Reusable-workflow call at job level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uses: Option<String>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub triggers: Vec<String>,
    /// Jobs in document order.
    pub jobs: Vec<Job>,
    pub raw_text: String,
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

fn string_map(v: Option<&Value>) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    if let Some(Value::Mapping(m)) = v {
        for (k, v) in m {
            if let (Some(k), Some(v)) = (scalar(k), scalar(v)) {
                out.insert(k, v);
            }
        }
    }
    out
}

fn triggers(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Sequence(seq)) => seq.iter().filter_map(scalar).collect(),
        Some(Value::Mapping(m)) => m.keys().filter_map(scalar).collect(),
        _ => Vec::new(),
    }
}

static PLAIN_WITH_COLON: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^(\s*(?:-\s+)?)([A-Za-z_][A-Za-z0-9_-]*):[ \t]+([^"'|>\s&*!\[{][^\n]*:\s[^\n]*)$"#).unwrap());

/// Rewrites plain scalars containing `: ` (invalid YAML that generated
/// workflows often carry, e.g. `run: echo "Title: x"`) as literal block
/// scalars. Returns `None` when nothing needed rewriting.
fn repair_plain_scalars(text: &str) -> Option<String> {
    let mut changed = false;
    let mut out = String::with_capacity(text.len() + 64);
    for line in text.lines() {
        match PLAIN_WITH_COLON.captures(line) {
            Some(c) => {
                changed = true;
                let indent = " ".repeat(c[1].len() + 2);
                out.push_str(&format!("{}{}: |\n{indent}{}\n", &c[1], &c[2], c[3].trim_end()));
            }
            None => {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    changed.then_some(out)
}

impl WorkflowDoc {
    /// Parses a workflow. Steps with neither `uses` nor `run` are dropped and
    /// reported in the returned warnings.
    pub fn parse(id: &str, text: &str) -> Result<(Self, Vec<String>), WorkflowError> {
        let mut warnings = Vec::new();
        let value: Value = match serde_yaml::from_str(text) {
            Ok(v) => v,
            Err(e) => {
                let repaired = repair_plain_scalars(text).ok_or_else(|| WorkflowError::Yaml(e.to_string()))?;
                let v = serde_yaml::from_str(&repaired).map_err(|_| WorkflowError::Yaml(e.to_string()))?;
                warnings.push(format!("invalid YAML ({e}); parsed after quoting plain scalars that contain ': '"));
                v
            }
        };
        let Value::Mapping(root) = value else {
            return Err(WorkflowError::NotAWorkflow);
        };
        let get = |k: &str| root.get(Value::String(k.to_owned()));
        let jobs_value = get("jobs").ok_or(WorkflowError::NotAWorkflow)?;
        let Value::Mapping(jobs_map) = jobs_value else {
            return Err(WorkflowError::JobsNotMapping);
        };
        // YAML 1.1 parsers read a bare `on` key as boolean true.
        let on = get("on").or_else(|| root.get(Value::Bool(true)));

        let mut jobs = Vec::new();
        for (job_id, job_value) in jobs_map {
            let Some(job_id) = scalar(job_id) else { continue };
            let Value::Mapping(job) = job_value else {
                warnings.push(format!("job '{job_id}' is not a mapping"));
                continue;
            };
            let uses = job.get(Value::String("uses".into())).and_then(scalar);
            let mut steps = Vec::new();
            if let Some(Value::Sequence(seq)) = job.get(Value::String("steps".into())) {
                for (index, step) in seq.iter().enumerate() {
                    let Value::Mapping(step) = step else {
                        warnings.push(format!("job '{job_id}' step {index} is not a mapping"));
                        continue;
                    };
                    let field = |k: &str| step.get(Value::String(k.to_owned()));
                    let uses = field("uses").and_then(scalar);
                    let run = field("run").and_then(scalar);
                    if uses.is_none() && run.is_none() {
                        warnings.push(format!("job '{job_id}' step {index} has neither `uses` nor `run`"));
                        continue;
                    }
                    steps.push(Step {
                        index,
                        name: field("name").and_then(scalar),
                        uses,
                        run,
                        with: string_map(field("with")),
                        env: string_map(field("env")),
                    });
                }
            }
            jobs.push(Job { id: job_id, uses, steps });
        }
        if jobs.is_empty() {
            return Err(WorkflowError::NoJobs);
        }
        let doc = WorkflowDoc {
            id: id.to_owned(),
            name: get("name").and_then(scalar),
            triggers: triggers(on),
            jobs,
            raw_text: text.to_owned(),
        };
        Ok((doc, warnings))
    }
}
