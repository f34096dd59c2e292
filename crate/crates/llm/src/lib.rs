//! Provider-agnostic chat-completion client.
//!
//! Requests go to `{base_url}/chat/completions` in the common
//! chat-completions JSON shape. A `mock:<dir>` base URL swaps the HTTP
//! transport for canned responses read from `<dir>/mock.json`.

mod embed;
mod extract;
mod gateway;
mod mock;
mod pacing;
mod transport;

pub use embed::{EmbeddingConfig, HttpEmbedder};
pub use extract::{extract_json_payload, json_regions};
pub use gateway::{ChatResponse, Gateway, Usage};
pub use mock::{MockReply, MockRoute, MockSpec, MockTransport, MOCK_FILE};
pub use transport::{HttpReply, HttpTransport, Transport, TransportError};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider rejected the request with HTTP {status}: {body}")]
    ProviderRejected { status: u16, body: String },
    #[error("provider unavailable after {attempts} attempts: {last}")]
    ProviderUnavailable { attempts: u32, last: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("unparseable JSON payload: {reason}")]
    Unparseable { reason: String, span: Option<(usize, usize)> },
}

impl LlmError {
    /// Errors that mean the provider itself could not be used, as opposed to
    /// a reply whose content was unusable.
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            LlmError::Config(_)
                | LlmError::ProviderRejected { .. }
                | LlmError::ProviderUnavailable { .. }
                | LlmError::MalformedResponse(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

pub const GENERATION_TEMPERATURE: f64 = 1.5;
pub const EVALUATION_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model: String,
}

impl ChatRequest {
    /// Single user turn with the given temperature.
    pub fn user(model: impl Into<String>, prompt: impl Into<String>, temperature: f64) -> Self {
        ChatRequest { messages: vec![Message::user(prompt)], temperature, max_tokens: 4096, model: model.into() }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(LlmError::InvalidRequest("at least one user message is required".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

fn default_max_retries() -> u32 {
    4
}
fn default_rpm() -> u32 {
    60
}
fn default_in_flight() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_request_timeout_ms() -> u64 {
    120_000
}

/// Connection settings for one provider. Holds the *name* of the
/// environment variable carrying the API key, never the key itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_request_timeout_ms")]
    pub request_timeout_ms: u64,
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key_env: impl Into<String>) -> Self {
        ProviderConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: api_key_env.into(),
            max_retries: default_max_retries(),
            requests_per_minute: default_rpm(),
            max_in_flight: default_in_flight(),
            backoff_base_ms: default_backoff_ms(),
            request_timeout_ms: default_request_timeout_ms(),
        }
    }

    /// Directory of a `mock:` provider, if this is one.
    pub fn mock_dir(&self) -> Option<&str> {
        self.base_url.strip_prefix("mock:")
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model.trim().is_empty() {
            return Err(LlmError::Config("model must be non-empty".into()));
        }
        if self.requests_per_minute == 0 {
            return Err(LlmError::Config("requests_per_minute must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be positive".into()));
        }
        if let Some(dir) = self.mock_dir() {
            if dir.is_empty() {
                return Err(LlmError::Config("mock provider needs a directory: mock:<dir>".into()));
            }
            return Ok(());
        }
        let scheme_ok = ["http://", "https://"].iter().any(|s| self.base_url.starts_with(s));
        if !scheme_ok || self.base_url.len() <= "https://".len() {
            return Err(LlmError::Config(format!("base_url `{}` is not an absolute http(s) URL", self.base_url)));
        }
        if self.api_key_env.trim().is_empty() {
            return Err(LlmError::Config("api_key_env must name an environment variable".into()));
        }
        Ok(())
    }
}
