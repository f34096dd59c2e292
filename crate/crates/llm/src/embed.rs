use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use softsql_core::diversity::{DiversityError, Embedder, EmbeddingVector, FallbackEmbedder};

use crate::mock::MockTransport;
use crate::transport::{HttpTransport, Transport};
use crate::{LlmError, MockSpec};

fn default_batch() -> usize {
    64
}
fn default_dim() -> usize {
    256
}

/// Where embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "lowercase")]
pub enum EmbeddingConfig {
    /// Offline hashed bag-of-words vectors.
    Fallback {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    /// `POST {base_url}/embeddings` in the common embeddings JSON shape.
    /// A `mock:` base URL serves fallback vectors through the same code path.
    Http {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: String,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Fallback { dim: default_dim(), seed: 0 }
    }
}

impl EmbeddingConfig {
    pub fn build(&self) -> Result<Box<dyn Embedder>, LlmError> {
        match self {
            EmbeddingConfig::Fallback { dim, seed } => Ok(Box::new(FallbackEmbedder { dim: *dim, seed: *seed })),
            EmbeddingConfig::Http { base_url, model, api_key_env, batch_size } => {
                if *batch_size == 0 {
                    return Err(LlmError::Config("embedding batch_size must be positive".into()));
                }
                let (transport, api_key): (Arc<dyn Transport>, Option<String>) =
                    if let Some(dir) = base_url.strip_prefix("mock:") {
                        let path = Path::new(dir);
                        let t = if path.join(crate::mock::MOCK_FILE).exists() {
                            MockTransport::from_dir(path)?
                        } else {
                            MockTransport::new(MockSpec::default())
                        };
                        (Arc::new(t), None)
                    } else {
                        let key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty()).ok_or_else(|| {
                            LlmError::Config(format!("environment variable `{api_key_env}` is not set"))
                        })?;
                        (Arc::new(HttpTransport::new(Duration::from_secs(120))), Some(key))
                    };
                Ok(Box::new(HttpEmbedder {
                    url: format!("{}/embeddings", base_url.trim_end_matches('/')),
                    model: model.clone(),
                    api_key,
                    batch_size: *batch_size,
                    transport,
                }))
            }
        }
    }
}

pub struct HttpEmbedder {
    url: String,
    model: String,
    api_key: Option<String>,
    batch_size: usize,
    transport: Arc<dyn Transport>,
}

impl HttpEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, DiversityError> {
        let body = json!({"model": self.model, "input": texts});
        let reply = self
            .transport
            .post_json(&self.url, self.api_key.as_deref(), &body)
            .map_err(|e| DiversityError::Provider(e.to_string()))?;
        if !(200..300).contains(&reply.status) {
            return Err(DiversityError::Provider(format!("HTTP {}: {}", reply.status, reply.body)));
        }
        let v: Value = serde_json::from_str(&reply.body).map_err(|e| DiversityError::Provider(e.to_string()))?;
        let data = v["data"].as_array().ok_or_else(|| DiversityError::Provider("response has no data array".into()))?;
        let mut out: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let idx = item["index"].as_u64().map_or(pos, |i| i as usize);
            let values: Vec<f64> = serde_json::from_value(item["embedding"].clone())
                .map_err(|e| DiversityError::Provider(format!("bad embedding: {e}")))?;
            let slot = out.get_mut(idx).ok_or_else(|| DiversityError::Provider(format!("index {idx} out of range")))?;
            *slot = Some(EmbeddingVector::new(values)?);
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| DiversityError::Provider(format!("no embedding returned for input {i}"))))
            .collect()
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, DiversityError> {
        let mut all = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            all.extend(self.embed_batch(chunk)?);
        }
        Ok(all)
    }
}
