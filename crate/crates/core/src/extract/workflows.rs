//! CI workflow documents and the plugin references inside them.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{extract_code_blocks, CodeBlock, Diagnostic, DiagnosticKind};
use crate::ci::{WorkflowDoc, WorkflowError};

/// Where a `uses:` value sits in its workflow.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PluginOrigin {
    pub workflow: String,
    pub job: String,
    /// `None` for a job-level reusable-workflow call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PluginRef {
    pub owner: String,
    pub repo: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subpath: Option<String>,
    /// The `@ref` part; absent when the workflow does not pin one.
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    pub git_ref: Option<String>,
    pub origin: PluginOrigin,
}

impl PluginRef {
    pub fn dedup_key(&self) -> String {
        match &self.git_ref {
            Some(r) => format!("plugin:{}/{}@{}", self.owner, self.repo, r),
            None => format!("plugin:{}/{}", self.owner, self.repo),
        }
    }

    /// Parses a `uses:` value. Returns `None` for local (`./`) and
    /// `docker://` references and for values without `owner/repo`.
    pub fn parse(value: &str, origin: PluginOrigin) -> Option<Self> {
        let value = value.trim();
        if value.starts_with("./") || value.starts_with("../") || value.starts_with("docker://") || value.contains("${{") {
            return None;
        }
        let (path, git_ref) = match value.rsplit_once('@') {
            Some((p, r)) => (p, Some(r.to_owned()).filter(|r| !r.is_empty())),
            None => (value, None),
        };
        let mut parts = path.splitn(3, '/');
        let owner = parts.next().filter(|s| !s.is_empty())?;
        let repo = parts.next().filter(|s| !s.is_empty())?;
        let subpath = parts.next().filter(|s| !s.is_empty()).map(str::to_owned);
        Some(Self { owner: owner.to_owned(), repo: repo.to_owned(), subpath, git_ref, origin })
    }
}

/// Plugin references of one workflow, with excluded references counted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PluginRefs {
    pub refs: Vec<PluginRef>,
    pub local: usize,
    pub docker: usize,
    pub diagnostics: Vec<Diagnostic>,
}

static JOBS_KEY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"(?m)^\s*["']?jobs["']?\s*:"#).unwrap());

fn looks_like_workflow(block: &CodeBlock) -> bool {
    JOBS_KEY.is_match(&block.text)
}

pub(crate) fn workflows_from_blocks(blocks: &[CodeBlock], diags: &mut Vec<Diagnostic>) -> Vec<WorkflowDoc> {
    let mut out = Vec::new();
    for block in blocks.iter().filter(|b| looks_like_workflow(b)) {
        let id = format!("workflow-{}", out.len() + 1);
        match WorkflowDoc::parse(&id, &block.text) {
            Ok((doc, warnings)) => {
                for w in warnings {
                    diags.push(Diagnostic::new(DiagnosticKind::InvalidStep, format!("{id}: {w}"), Some(block.span)));
                }
                out.push(doc);
            }
            Err(WorkflowError::NotAWorkflow) => {}
            Err(e) => diags.push(Diagnostic::new(DiagnosticKind::WorkflowParse, e.to_string(), Some(block.span))),
        }
    }
    out
}

/// Returns each block of the response that parses as a workflow document
/// (a YAML mapping with a `jobs` mapping), in order.
pub fn extract_workflows(response_text: &str, diags: &mut Vec<Diagnostic>) -> Vec<WorkflowDoc> {
    workflows_from_blocks(&extract_code_blocks(response_text), diags)
}

/// Parses every `uses:` value of a workflow (step and job level).
pub fn extract_plugin_refs(doc: &WorkflowDoc) -> PluginRefs {
    let mut out = PluginRefs::default();
    let mut visit = |value: &str, job: &str, step: Option<usize>| {
        let v = value.trim();
        if v.starts_with("./") || v.starts_with("../") {
            out.local += 1;
            return;
        }
        if v.starts_with("docker://") {
            out.docker += 1;
            return;
        }
        let origin = PluginOrigin { workflow: doc.id.clone(), job: job.to_owned(), step };
        match PluginRef::parse(v, origin) {
            Some(r) => out.refs.push(r),
            None => out.diagnostics.push(Diagnostic::new(
                DiagnosticKind::MalformedUses,
                format!("{}: job '{job}': unparseable uses '{v}'", doc.id),
                None,
            )),
        }
    };
    for job in &doc.jobs {
        if let Some(uses) = &job.uses {
            visit(uses, &job.id, None);
        }
        for step in &job.steps {
            if let Some(uses) = &step.uses {
                visit(uses, &job.id, Some(step.index));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = "```yaml\nname: Print PR title\non: pull_request\njobs:\n  print-title:\n    runs-on: ubuntu-latest\n    steps:\n      - run: echo \"Title: ${{github.event.pull_request.title}}\"\n```\n";

    #[test]
    fn one_workflow_one_job() {
        let docs = extract_workflows(LISTING, &mut Vec::new());
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].jobs.len(), 1);
    }

    #[test]
    fn prose_is_not_a_workflow() {
        assert!(extract_workflows("Use a workflow with a checkout step.", &mut Vec::new()).is_empty());
    }

    #[test]
    fn two_workflows_in_order() {
        let a = "```yaml\nname: a\non: push\njobs:\n  x:\n    runs-on: ubuntu-latest\n    steps:\n      - run: echo a\n```\n";
        let b = a.replace("name: a", "name: b");
        let docs = extract_workflows(&format!("{a}text\n{b}"), &mut Vec::new());
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].name.as_deref(), Some("a"));
        assert_eq!(docs[1].name.as_deref(), Some("b"));
    }

    #[test]
    fn broken_workflow_is_a_diagnostic() {
        let mut diags = Vec::new();
        let docs = extract_workflows("```yaml\njobs:\n  x: [unclosed\n```", &mut diags);
        assert!(docs.is_empty());
        assert_eq!(diags[0].kind, DiagnosticKind::WorkflowParse);
    }

    fn plugins(steps: &str) -> PluginRefs {
        let text = format!("on: push\njobs:\n  build:\n    runs-on: ubuntu-latest\n    steps:\n{steps}");
        let (doc, _) = WorkflowDoc::parse("w", &text).unwrap();
        extract_plugin_refs(&doc)
    }

    #[test]
    fn uses_values() {
        let p = plugins(
            "      - uses: actions/checkout@v4.0.1\n      - uses: ./local/action\n      - uses: microsoft/setup-msbuild@v1.0.1\n      - uses: docker://alpine:3\n      - uses: owner/repo/sub/dir\n",
        );
        assert_eq!(p.local, 1);
        assert_eq!(p.docker, 1);
        assert_eq!(p.refs.len(), 3);
        assert_eq!((p.refs[0].owner.as_str(), p.refs[0].repo.as_str()), ("actions", "checkout"));
        assert_eq!(p.refs[0].git_ref.as_deref(), Some("v4.0.1"));
        assert_eq!(p.refs[1].git_ref.as_deref(), Some("v1.0.1"));
        assert_eq!(p.refs[1].repo, "setup-msbuild");
        assert_eq!(p.refs[2].git_ref, None);
        assert_eq!(p.refs[2].subpath.as_deref(), Some("sub/dir"));
        assert_eq!(p.refs[2].origin.step, Some(4));
    }
}
