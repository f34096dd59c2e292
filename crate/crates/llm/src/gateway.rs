use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::mock::MockTransport;
use crate::pacing::{Semaphore, TokenBucket};
use crate::transport::{HttpReply, HttpTransport, Transport};
use crate::{ChatRequest, LlmError, ProviderConfig};

const MAX_BACKOFF: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Usage,
    /// Transient failures retried before this response arrived.
    pub retries: u32,
}

/// A configured provider. Shareable across worker threads: the rate limiter
/// and in-flight bound are the only shared state.
pub struct Gateway {
    cfg: ProviderConfig,
    transport: Arc<dyn Transport>,
    api_key: Option<String>,
    bucket: TokenBucket,
    in_flight: Semaphore,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("base_url", &self.cfg.base_url).field("model", &self.cfg.model).finish()
    }
}

enum Attempt {
    Done(ChatResponse),
    Transient(String),
}

impl Gateway {
    /// Builds the transport implied by `cfg.base_url`. `mock:<dir>` reads
    /// canned replies from `<dir>/mock.json`; anything else is HTTP and needs
    /// the API key environment variable to be set.
    pub fn new(cfg: ProviderConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let transport: Arc<dyn Transport> = match cfg.mock_dir() {
            Some(dir) => Arc::new(MockTransport::from_dir(Path::new(dir))?),
            None => Arc::new(HttpTransport::new(Duration::from_millis(cfg.request_timeout_ms))),
        };
        Gateway::with_transport(cfg, transport)
    }

    pub fn with_transport(cfg: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self, LlmError> {
        cfg.validate()?;
        let api_key = if cfg.mock_dir().is_some() {
            None
        } else {
            match std::env::var(&cfg.api_key_env) {
                Ok(k) if !k.is_empty() => Some(k),
                _ => return Err(LlmError::Config(format!("environment variable `{}` is not set", cfg.api_key_env))),
            }
        };
        Ok(Gateway {
            bucket: TokenBucket::new(cfg.requests_per_minute, cfg.max_in_flight),
            in_flight: Semaphore::new(cfg.max_in_flight),
            cfg,
            transport,
            api_key,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    pub fn model(&self) -> &str {
        &self.cfg.model
    }

    /// Single user prompt against the configured model.
    pub fn complete(&self, prompt: &str, temperature: f64) -> Result<ChatResponse, LlmError> {
        self.chat(&ChatRequest::user(self.cfg.model.clone(), prompt, temperature))
    }

    /// Sends `req`, retrying HTTP 429, 5xx and transport failures with
    /// exponential backoff and full jitter. Other non-2xx statuses fail
    /// immediately.
    pub fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let body = json!({
            "model": if req.model.is_empty() { &self.cfg.model } else { &req.model },
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut retries = 0;
        loop {
            let outcome = {
                self.bucket.acquire();
                let _permit = self.in_flight.acquire();
                self.transport.post_json(&url, self.api_key.as_deref(), &body)
            };
            let attempt = match outcome {
                Ok(reply) => classify_reply(reply, retries)?,
                Err(e) => Attempt::Transient(e.to_string()),
            };
            match attempt {
                Attempt::Done(resp) => return Ok(resp),
                Attempt::Transient(last) if retries >= self.cfg.max_retries => {
                    return Err(LlmError::ProviderUnavailable { attempts: retries + 1, last });
                }
                Attempt::Transient(last) => {
                    let delay = self.backoff(retries);
                    tracing::warn!(model = %self.cfg.model, retry = retries + 1, ?delay, error = %last, "transient provider failure");
                    std::thread::sleep(delay);
                    retries += 1;
                }
            }
        }
    }

    /// Full jitter: uniform in `[0, min(cap, base * 2^retry)]`.
    fn backoff(&self, retry: u32) -> Duration {
        let ceiling = Duration::from_millis(self.cfg.backoff_base_ms)
            .saturating_mul(1u32.checked_shl(retry).unwrap_or(u32::MAX))
            .min(MAX_BACKOFF);
        ceiling.mul_f64(rand::thread_rng().gen_range(0.0..=1.0))
    }
}

fn classify_reply(reply: HttpReply, retries: u32) -> Result<Attempt, LlmError> {
    match reply.status {
        200..=299 => parse_completion(&reply.body).map(|(content, usage)| Attempt::Done(ChatResponse { content, usage, retries })),
        429 | 500..=599 => Ok(Attempt::Transient(format!("HTTP {}: {}", reply.status, truncate(&reply.body)))),
        status => Err(LlmError::ProviderRejected { status, body: truncate(&reply.body) }),
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

fn parse_completion(body: &str) -> Result<(String, Usage), LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))?
        .to_owned();
    let usage = serde_json::from_value(v["usage"].clone()).unwrap_or_default();
    Ok((content, usage))
}
