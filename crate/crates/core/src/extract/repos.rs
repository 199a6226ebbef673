use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Span;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepoRef {
    pub owner: String,
    pub repo: String,
    pub origin: Span,
}

impl RepoRef {
    pub fn dedup_key(&self) -> String {
        format!("repo:{}/{}", self.owner, self.repo)
    }
}

/// Top-level github.com paths that are site pages, not accounts.
const RESERVED_OWNERS: &[&str] = &[
    "about", "apps", "collections", "contact", "customer-stories", "enterprise", "events", "explore", "features",
    "issues", "join", "login", "marketplace", "new", "notifications", "orgs", "pricing", "pulls", "search",
    "security", "settings", "site", "sponsors", "topics", "trending",
];

static REPO_URL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:https?://)?(?:www\.)?github\.com/([A-Za-z0-9](?:[A-Za-z0-9-]*[A-Za-z0-9])?)/([A-Za-z0-9._-]+)").unwrap()
});

/// Finds `github.com/{owner}/{repo}` links anywhere in the text, prose
/// included. Trailing paths are dropped and results are deduplicated by
/// `(owner, repo)`, keeping the first occurrence.
pub fn extract_repo_refs(text: &str) -> Vec<RepoRef> {
    let bytes = text.as_bytes();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for caps in REPO_URL.captures_iter(text) {
        let m = caps.get(0).expect("whole match");
        // Reject subdomains such as api.github.com or gist.github.com.
        if m.start() > 0 {
            let prev = bytes[m.start() - 1];
            if prev.is_ascii_alphanumeric() || matches!(prev, b'.' | b'-' | b'_' | b'/' | b'@') {
                continue;
            }
        }
        let owner = &caps[1];
        if RESERVED_OWNERS.iter().any(|r| r.eq_ignore_ascii_case(owner)) {
            continue;
        }
        let raw_repo = caps.get(2).expect("repo group");
        let mut repo = raw_repo.as_str().trim_end_matches(['.', '_', '-']);
        repo = repo.strip_suffix(".git").unwrap_or(repo);
        if repo.is_empty() || repo == "." || repo == ".." {
            continue;
        }
        let end = raw_repo.start() + repo.len();
        if seen.insert((owner.to_owned(), repo.to_owned())) {
            out.push(RepoRef { owner: owner.to_owned(), repo: repo.to_owned(), origin: Span::new(m.start(), end) });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hallucinated_account_link() {
        let text = "Clone https://github.com/gradle-php/toolkit to start.";
        let refs = extract_repo_refs(text);
        assert_eq!(refs.len(), 1);
        assert_eq!((refs[0].owner.as_str(), refs[0].repo.as_str()), ("gradle-php", "toolkit"));
        assert!(refs[0].origin.slice(text).ends_with("gradle-php/toolkit"));
    }

    #[test]
    fn nothing_to_find() {
        assert!(extract_repo_refs("no links here, only gitlab.com/a/b").is_empty());
    }

    #[test]
    fn dedup_and_path_stripping() {
        let text = "see github.com/a/b/tree/main/src and https://github.com/a/b.git, also https://github.com/a/c.";
        let refs = extract_repo_refs(text);
        let pairs: Vec<_> = refs.iter().map(|r| (r.owner.as_str(), r.repo.as_str())).collect();
        assert_eq!(pairs, vec![("a", "b"), ("a", "c")]);
    }

    #[test]
    fn subdomains_and_site_pages_ignored() {
        let text = "https://api.github.com/repos/a/b https://gist.github.com/u/abc https://github.com/features/actions";
        assert!(extract_repo_refs(text).is_empty());
    }
}
