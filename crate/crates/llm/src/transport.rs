use std::time::Duration;

/// Raw HTTP outcome: any status with its body text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

impl HttpReply {
    pub fn ok(body: impl Into<String>) -> Self {
        HttpReply { status: 200, body: body.into() }
    }
}

/// Failures below the HTTP layer. All of them are treated as transient.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("connection failed: {0}")]
    Connection(String),
}

/// Posts a JSON body and returns whatever the server answered.
pub trait Transport: Send + Sync {
    /// `bearer` is the API key; implementations must send it only as the
    /// `Authorization` header of `url`.
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &serde_json::Value)
        -> Result<HttpReply, TransportError>;
}

/// Blocking HTTP transport. Redirects are disabled so the bearer token can
/// never be replayed to another host.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .max_redirects(0)
            .build();
        HttpTransport { agent: ureq::Agent::new_with_config(config) }
    }
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
    ) -> Result<HttpReply, TransportError> {
        let payload = serde_json::to_vec(body).map_err(|e| TransportError::Connection(e.to_string()))?;
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(&payload[..]).map_err(|e| match e {
            ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
            other => TransportError::Connection(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
            other => TransportError::Connection(other.to_string()),
        })?;
        Ok(HttpReply { status, body })
    }
}
