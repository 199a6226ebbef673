use std::collections::BTreeMap;
use std::time::Duration;

use chrono::Utc;

use super::http::{HttpRequest, HttpResponse, Transport, TransportError, KEPT_HEADERS};

/// Network transport. Redirects are not followed here; the client layer
/// follows them so every hop is visible to recording and depth limits.
pub struct LiveTransport {
    client: reqwest::blocking::Client,
}

impl LiveTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .redirect(reqwest::redirect::Policy::none())
            .user_agent(concat!("sentinel/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for LiveTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let method = reqwest::Method::from_bytes(req.method.as_bytes()).map_err(|e| TransportError::Other(e.to_string()))?;
        let mut builder = self.client.request(method, &req.url);
        for (k, v) in &req.headers {
            builder = builder.header(k, v);
        }
        let resp = builder.send().map_err(classify)?;
        let status = resp.status().as_u16();
        let mut headers = BTreeMap::new();
        for name in KEPT_HEADERS {
            if let Some(v) = resp.headers().get(*name).and_then(|v| v.to_str().ok()) {
                headers.insert((*name).to_owned(), v.to_owned());
            }
        }
        let body = if req.want_body { resp.text().map_err(classify)? } else { String::new() };
        Ok(HttpResponse { status, headers, body, observed_at: Utc::now() })
    }

    fn is_live(&self) -> bool {
        true
    }
}

fn classify(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else if e.is_connect() {
        TransportError::Connect(e.to_string())
    } else {
        TransportError::Other(e.to_string())
    }
}
