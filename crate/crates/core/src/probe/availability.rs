use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Availability, Fetched, HttpClient, HttpRequest, ProbeError};

/// Answers whether a registrable domain can be bought.
pub trait AvailabilityBackend: Send + Sync {
    fn check(&self, domain: &str) -> Result<Availability, ProbeError>;
}

/// Fixed answers; domains not listed are `Unknown`.
#[derive(Debug, Clone, Default)]
pub struct StaticAvailability(pub BTreeMap<String, Availability>);

impl StaticAvailability {
    pub fn with(mut self, domain: &str, a: Availability) -> Self {
        self.0.insert(domain.to_ascii_lowercase(), a);
        self
    }
}

impl AvailabilityBackend for StaticAvailability {
    fn check(&self, domain: &str) -> Result<Availability, ProbeError> {
        Ok(self.0.get(&domain.to_ascii_lowercase()).copied().unwrap_or(Availability::Unknown))
    }
}

/// Registrar availability API: `GET {base}/v1/domains/available?domain=D`
/// answering `{"available": bool, ...}`. Any purchasable state counts as
/// available; errors and unexpected bodies are `Unknown`.
pub struct HttpAvailability {
    client: Arc<HttpClient>,
    base: String,
    /// `key:secret` credential sent as an `sso-key` authorization header.
    credential: Option<String>,
}

impl HttpAvailability {
    pub fn new(client: Arc<HttpClient>, base: &str, credential: Option<String>) -> Self {
        Self { client, base: base.trim_end_matches('/').to_owned(), credential }
    }

    pub fn request_url(&self, domain: &str) -> String {
        let mut url = url::Url::parse(&format!("{}/v1/domains/available", self.base)).expect("availability base is a URL");
        url.query_pairs_mut().append_pair("domain", domain);
        url.to_string()
    }
}

impl AvailabilityBackend for HttpAvailability {
    fn check(&self, domain: &str) -> Result<Availability, ProbeError> {
        let mut req = HttpRequest::get(self.request_url(domain)).header("accept", "application/json");
        if let Some(c) = &self.credential {
            req = req.header("authorization", format!("sso-key {c}"));
        }
        let Fetched::Response(resp) = self.client.fetch(&req)? else {
            return Ok(Availability::Unknown);
        };
        if !(200..300).contains(&resp.status) {
            return Ok(Availability::Unknown);
        }
        Ok(match resp.json().and_then(|v| v.get("available").and_then(|a| a.as_bool())) {
            Some(true) => Availability::Available,
            Some(false) => Availability::Taken,
            None => Availability::Unknown,
        })
    }
}
