//! Registrable-domain (eTLD+1) helpers.

use std::net::IpAddr;

/// Returns the registrable domain for `host`, or `None` when the host is an
/// IP literal, a single label, or has no known public suffix.
pub fn registrable_domain(host: &str) -> Option<String> {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    if host.is_empty() || host.parse::<IpAddr>().is_ok() || !host.contains('.') {
        return None;
    }
    let trimmed = host.trim_start_matches('[').trim_end_matches(']');
    if trimmed.parse::<IpAddr>().is_ok() {
        return None;
    }
    let domain = psl::domain(host.as_bytes())?;
    if !domain.suffix().is_known() {
        return None;
    }
    std::str::from_utf8(domain.as_bytes()).ok().map(str::to_owned)
}

/// The domain used as a grouping/probing key: the registrable domain when one
/// exists, the lowercased host otherwise.
pub fn domain_key(host: &str) -> String {
    registrable_domain(host).unwrap_or_else(|| host.trim_end_matches('.').to_ascii_lowercase())
}
