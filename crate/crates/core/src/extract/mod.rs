//! Recovery of external component references from LLM response text.
//!
//! Responses are split into fenced code blocks first. Package install
//! commands and URLs are mined from blocks only; GitHub repository links are
//! mined from the full text, prose included. Every reference carries the
//! byte span of its surface text in the original response.

mod fence;
pub mod packages;
pub mod repos;
mod shell;
pub mod urls;
pub mod workflows;

use serde::{Deserialize, Serialize};

pub use fence::extract_code_blocks;
pub use packages::{extract_package_refs, PackageRef, Registry};
pub use repos::{extract_repo_refs, RepoRef};
pub use urls::{extract_cdn_package, extract_url_refs, CdnHost, CdnHosts, CdnPackageRef, UrlKind, UrlRef};
pub use workflows::{extract_plugin_refs, extract_workflows, PluginOrigin, PluginRef, PluginRefs};

use crate::ci::WorkflowDoc;

/// Half-open byte range `[start, end)` into the response text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn shift(self, by: usize) -> Self {
        Self::new(self.start + by, self.end + by)
    }

    pub fn slice(self, text: &str) -> &str {
        &text[self.start..self.end]
    }
}

/// A fenced code block, or the whole response when it carries no fences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    /// First word of the fence info string, lowercased.
    pub language_hint: Option<String>,
    pub text: String,
    /// Location of `text` in the response; `response[span] == text`.
    pub span: Span,
}

impl CodeBlock {
    /// A block that is not embedded in a larger response.
    pub fn standalone(text: impl Into<String>) -> Self {
        let text = text.into();
        let span = Span::new(0, text.len());
        Self { language_hint: None, text, span }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    UnparseableToken,
    MalformedUrl,
    WorkflowParse,
    InvalidStep,
    MalformedUses,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, message: impl Into<String>, span: Option<Span>) -> Self {
        Self { kind, message: message.into(), span }
    }
}

/// Everything recovered from one response.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub blocks: Vec<CodeBlock>,
    pub packages: Vec<PackageRef>,
    pub urls: Vec<UrlRef>,
    pub cdn_packages: Vec<CdnPackageRef>,
    pub repos: Vec<RepoRef>,
    pub workflows: Vec<WorkflowDoc>,
    pub plugins: Vec<PluginRef>,
    pub local_plugin_refs: usize,
    pub docker_plugin_refs: usize,
    pub diagnostics: Vec<Diagnostic>,
}

/// Runs every extraction pass over a response.
#[derive(Debug, Clone, Default)]
pub struct Extractor {
    cdn_hosts: CdnHosts,
}

impl Extractor {
    pub fn new(cdn_hosts: CdnHosts) -> Self {
        Self { cdn_hosts }
    }

    pub fn cdn_hosts(&self) -> &CdnHosts {
        &self.cdn_hosts
    }

    pub fn extract_all(&self, response: &str) -> Extraction {
        let mut out = Extraction { blocks: extract_code_blocks(response), ..Default::default() };
        let mut diags = Vec::new();
        for block in &out.blocks {
            out.packages.extend(extract_package_refs(block, &mut diags));
            let urls = extract_url_refs(block, &self.cdn_hosts, &mut diags);
            for url in &urls {
                if url.kind == UrlKind::Cdn {
                    if let Some(cdn) = extract_cdn_package(url, &self.cdn_hosts) {
                        out.cdn_packages.push(cdn);
                    }
                }
            }
            out.urls.extend(urls);
        }
        out.repos = extract_repo_refs(response);
        out.workflows = workflows::workflows_from_blocks(&out.blocks, &mut diags);
        for doc in &out.workflows {
            let refs = extract_plugin_refs(doc);
            out.local_plugin_refs += refs.local;
            out.docker_plugin_refs += refs.docker;
            diags.extend(refs.diagnostics);
            out.plugins.extend(refs.refs);
        }
        out.diagnostics = diags;
        out
    }
}
