use std::path::Path;

use serde::{Deserialize, Serialize};

const DEFAULT_CATALOG: &str = include_str!("../../data/ci_catalog.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptSink {
    /// `owner/repo` of the plugin.
    pub action: String,
    pub inputs: Vec<String>,
}

/// Tainted-context catalog, attacker-initiable triggers and script-sink
/// allowlist. Loaded from an editable TOML file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiCatalog {
    pub tainted_contexts: Vec<String>,
    pub attacker_initiable_events: Vec<String>,
    #[serde(default)]
    pub script_sinks: Vec<ScriptSink>,
}

impl Default for CiCatalog {
    fn default() -> Self {
        toml::from_str(DEFAULT_CATALOG).expect("bundled CI catalog parses")
    }
}

impl CiCatalog {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn is_tainted(&self, normalized_path: &str) -> bool {
        self.tainted_contexts.iter().any(|c| c == normalized_path)
    }

    pub fn is_attacker_initiable(&self, event: &str) -> bool {
        self.attacker_initiable_events.iter().any(|e| e == event)
    }

    /// Script-evaluated inputs of the plugin named by a `uses:` value.
    pub fn sink_inputs(&self, uses: &str) -> &[String] {
        let path = uses.split('@').next().unwrap_or(uses);
        self.script_sinks
            .iter()
            .find(|s| s.action.eq_ignore_ascii_case(path))
            .map_or(&[], |s| s.inputs.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_catalog_has_minimum_entries() {
        let c = CiCatalog::default();
        for path in [
            "github.event.pull_request.title",
            "github.event.pull_request.body",
            "github.event.issue.title",
            "github.event.issue.body",
            "github.event.comment.body",
            "github.event.review.body",
            "github.head_ref",
            "github.event.pull_request.head.ref",
            "github.event.commits[*].message",
            "github.event.head_commit.message",
        ] {
            assert!(c.is_tainted(path), "{path}");
        }
        assert!(!c.is_tainted("github.sha"));
        assert_eq!(c.sink_inputs("actions/github-script@v7"), ["script".to_owned()]);
        assert!(c.sink_inputs("actions/checkout@v4").is_empty());
    }
}
