use serde::{Deserialize, Serialize};

use crate::extract::PluginRef;
use crate::probe::RefInventory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefKind {
    Tag,
    Branch,
    CommitHash,
    Hallucinated,
    MixedTagBranch,
    Unpinned,
}

/// Which part of a hallucinated plugin reference does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HallucinatedPart {
    Plugin,
    Version,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefClassification {
    pub plugin: PluginRef,
    pub kind: RefKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hallucinated: Option<HallucinatedPart>,
}

/// 40 lowercase hex characters.
pub fn is_commit_hash(r: &str) -> bool {
    r.len() == 40 && r.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Whether classifying this reference needs the tag and branch lists.
pub fn needs_inventory(plugin: &PluginRef) -> bool {
    plugin.git_ref.as_deref().is_some_and(|r| !is_commit_hash(r))
}

/// Classifies a plugin reference. `inventory` is `None` when the repository
/// probe concluded NotFound. Callers must supply the fetched inventory
/// whenever [`needs_inventory`] holds.
pub fn classify_plugin_ref(plugin: &PluginRef, inventory: Option<&RefInventory>) -> RefClassification {
    let (kind, hallucinated) = match (inventory, plugin.git_ref.as_deref()) {
        (None, _) => (RefKind::Hallucinated, Some(HallucinatedPart::Plugin)),
        (Some(_), None) => (RefKind::Unpinned, None),
        (Some(_), Some(r)) if is_commit_hash(r) => (RefKind::CommitHash, None),
        (Some(inv), Some(r)) => match (inv.tags.contains(r), inv.branches.contains(r)) {
            (true, true) => (RefKind::MixedTagBranch, None),
            (true, false) => (RefKind::Tag, None),
            (false, true) => (RefKind::Branch, None),
            (false, false) => (RefKind::Hallucinated, Some(HallucinatedPart::Version)),
        },
    };
    RefClassification { plugin: plugin.clone(), kind, hallucinated }
}
