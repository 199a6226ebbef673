//! Expression-injection detection for workflow scripts.
//!
//! A finding is a `${{ ... }}` expression that reads a tainted context and is
//! interpolated straight into a `run:` script or into a script input of an
//! allowlisted plugin. Routing the value through `env:` and reading it as a
//! shell variable is not flagged: the runner substitutes expressions into the
//! script text before the shell parses it, while environment variables are
//! expanded by the shell as data.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CiCatalog, WorkflowDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sink {
    RunScript,
    ScriptInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionSeverity {
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InjectionFinding {
    pub workflow: String,
    pub job: String,
    pub step: usize,
    /// Normalized context path, always a catalog entry.
    pub tainted_expression: String,
    pub sink: Sink,
    pub severity: InjectionSeverity,
}

static EXPRESSION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\$\{\{(.*?)\}\}").unwrap());
static CONTEXT_PATH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"[A-Za-z_][A-Za-z0-9_-]*(?:\.[A-Za-z0-9_*-]+|\[\s*(?:\d+|\*|'[^']*'|"[^"]*")\s*\])*"#).unwrap()
});
static BRACKET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"\[\s*(\d+|\*|'([^']*)'|"([^"]*)")\s*\]"#).unwrap());

/// Normalizes a context path: numeric and `*` indexes (bracketed or dotted)
/// become `[*]`, quoted bracket keys become dotted segments.
pub fn normalize_context_path(path: &str) -> String {
    let dotted = BRACKET.replace_all(path, |c: &regex::Captures<'_>| match (c.get(2), c.get(3)) {
        (Some(k), _) | (_, Some(k)) => format!(".{}", k.as_str()),
        _ => "[*]".to_owned(),
    });
    let mut out = String::new();
    for (i, seg) in dotted.split('.').enumerate() {
        if seg == "*" || (!seg.is_empty() && seg.bytes().all(|b| b.is_ascii_digit())) {
            out.push_str("[*]");
            continue;
        }
        if i > 0 {
            out.push('.');
        }
        out.push_str(seg);
    }
    out
}

fn tainted_paths<'a>(text: &'a str, catalog: &'a CiCatalog) -> impl Iterator<Item = String> + 'a {
    EXPRESSION.captures_iter(text).flat_map(move |c| {
        let inner = c.get(1).map_or("", |m| m.as_str()).to_owned();
        CONTEXT_PATH
            .find_iter(&inner)
            .map(|m| normalize_context_path(m.as_str()))
            .filter(|p| catalog.is_tainted(p))
            .collect::<Vec<_>>()
    })
}

/// Flags every script sink that interpolates a tainted context.
pub fn detect_code_injection(doc: &WorkflowDoc, catalog: &CiCatalog) -> Vec<InjectionFinding> {
    let severity = if doc.triggers.iter().any(|t| catalog.is_attacker_initiable(t)) {
        InjectionSeverity::High
    } else {
        InjectionSeverity::Medium
    };
    let mut out = Vec::new();
    for job in &doc.jobs {
        for step in &job.steps {
            let mut seen = BTreeSet::new();
            let mut emit = |path: String, sink: Sink, out: &mut Vec<InjectionFinding>| {
                if seen.insert((path.clone(), sink)) {
                    out.push(InjectionFinding {
                        workflow: doc.id.clone(),
                        job: job.id.clone(),
                        step: step.index,
                        tainted_expression: path,
                        sink,
                        severity,
                    });
                }
            };
            if let Some(run) = &step.run {
                for path in tainted_paths(run, catalog) {
                    emit(path, Sink::RunScript, &mut out);
                }
            }
            if let Some(uses) = &step.uses {
                for input in catalog.sink_inputs(uses) {
                    if let Some(script) = step.with.get(input) {
                        for path in tainted_paths(script, catalog) {
                            emit(path, Sink::ScriptInput, &mut out);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Substitutes `${{ path }}` expressions the way the runner does before the
/// script reaches the shell. Paths missing from `context` become empty.
pub fn interpolate_expressions(script: &str, context: &BTreeMap<String, String>) -> String {
    EXPRESSION
        .replace_all(script, |c: &regex::Captures<'_>| {
            let key = normalize_context_path(c[1].trim());
            context.get(&key).cloned().unwrap_or_default()
        })
        .into_owned()
}

/// Pluggable injection analysis, so an external analyzer can stand in for
/// the built-in pattern matcher.
pub trait InjectionAnalyzer: Send + Sync {
    fn analyze(&self, doc: &WorkflowDoc) -> Result<Vec<InjectionFinding>, String>;
}

#[derive(Debug, Clone, Default)]
pub struct PatternAnalyzer {
    pub catalog: CiCatalog,
}

impl InjectionAnalyzer for PatternAnalyzer {
    fn analyze(&self, doc: &WorkflowDoc) -> Result<Vec<InjectionFinding>, String> {
        Ok(detect_code_injection(doc, &self.catalog))
    }
}

/// Runs an external analyzer binary. The workflow text is written to a
/// temporary file whose path is appended to `args`; stdout must be a JSON
/// array of [`InjectionFinding`].
#[derive(Debug, Clone)]
pub struct ExternalAnalyzer {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl InjectionAnalyzer for ExternalAnalyzer {
    fn analyze(&self, doc: &WorkflowDoc) -> Result<Vec<InjectionFinding>, String> {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("sentinel-{}-{}.yml", std::process::id(), doc.id));
        {
            let mut f = std::fs::File::create(&path).map_err(|e| e.to_string())?;
            f.write_all(doc.raw_text.as_bytes()).map_err(|e| e.to_string())?;
        }
        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(&path)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| format!("{}: {e}", self.program.display()));
        let _ = std::fs::remove_file(&path);
        let output = output?;
        if !output.status.success() {
            return Err(format!("{} exited with {}", self.program.display(), output.status));
        }
        serde_json::from_slice(&output.stdout).map_err(|e| format!("analyzer output: {e}"))
    }
}
