use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use softsql_core::diversity::fallback_embed;

use crate::transport::{HttpReply, Transport, TransportError};
use crate::LlmError;

/// One scripted reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    /// HTTP 200 whose assistant message is this text.
    Content(String),
    /// Raw HTTP status and body, e.g. `{"status": 503}`.
    Status {
        status: u16,
        #[serde(default)]
        body: String,
    },
    /// Simulated transport timeout: `{"timeout": true}`.
    Timeout { timeout: bool },
}

/// Replies served, in order, to prompts containing `contains`. The last
/// reply repeats once the list is exhausted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRoute {
    pub contains: String,
    pub responses: Vec<MockReply>,
}

/// Contents of `<dir>/mock.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockSpec {
    #[serde(default)]
    pub routes: Vec<MockRoute>,
    /// Used when no route matches.
    #[serde(default)]
    pub default: Vec<MockReply>,
}

impl MockSpec {
    pub fn fixed(reply: impl Into<String>) -> Self {
        MockSpec { routes: vec![], default: vec![MockReply::Content(reply.into())] }
    }

    pub fn fixed_status(status: u16) -> Self {
        MockSpec { routes: vec![], default: vec![MockReply::Status { status, body: String::new() }] }
    }

    pub fn sequence(replies: Vec<MockReply>) -> Self {
        MockSpec { routes: vec![], default: replies }
    }
}

pub const MOCK_FILE: &str = "mock.json";
pub const MOCK_EMBED_DIM: usize = 256;

/// Offline provider answering chat requests from a [`MockSpec`].
///
/// The longest matching `contains` wins, ties going to the earlier route.
/// Requests to an `/embeddings` URL are answered with the deterministic
/// fallback embedding of each input.
pub struct MockTransport {
    spec: MockSpec,
    cursors: Mutex<Vec<usize>>,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new(spec: MockSpec) -> Self {
        let n = spec.routes.len() + 1;
        MockTransport { spec, cursors: Mutex::new(vec![0; n]), calls: AtomicUsize::new(0) }
    }

    pub fn from_dir(dir: &Path) -> Result<Self, LlmError> {
        let path = dir.join(MOCK_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| LlmError::Config(format!("mock provider: reading {}: {e}", path.display())))?;
        let spec = serde_json::from_str(&text)
            .map_err(|e| LlmError::Config(format!("mock provider: parsing {}: {e}", path.display())))?;
        Ok(MockTransport::new(spec))
    }

    /// Requests received so far, including failed ones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn pick(&self, prompt: &str) -> Option<MockReply> {
        let mut best: Option<usize> = None;
        for (i, r) in self.spec.routes.iter().enumerate() {
            if prompt.contains(&r.contains) && best.is_none_or(|b| r.contains.len() > self.spec.routes[b].contains.len())
            {
                best = Some(i);
            }
        }
        let (slot, replies) = match best {
            Some(i) => (i, &self.spec.routes[i].responses),
            None => (self.spec.routes.len(), &self.spec.default),
        };
        if replies.is_empty() {
            return None;
        }
        let mut cursors = self.cursors.lock().expect("mock cursor lock");
        let idx = cursors[slot].min(replies.len() - 1);
        cursors[slot] += 1;
        Some(replies[idx].clone())
    }

    fn chat(&self, body: &Value) -> Result<HttpReply, TransportError> {
        let prompt = body["messages"]
            .as_array()
            .map(|ms| ms.iter().filter_map(|m| m["content"].as_str()).collect::<Vec<_>>().join("\n"))
            .unwrap_or_default();
        match self.pick(&prompt) {
            None => Ok(HttpReply { status: 404, body: "no mock route matches the prompt".into() }),
            Some(MockReply::Timeout { .. }) => Err(TransportError::Timeout("scripted mock timeout".into())),
            Some(MockReply::Status { status, body }) => Ok(HttpReply { status, body }),
            Some(MockReply::Content(content)) => {
                let prompt_tokens = prompt.split_whitespace().count();
                let completion_tokens = content.split_whitespace().count();
                let reply = json!({
                    "object": "chat.completion",
                    "model": body["model"],
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
                    "usage": {
                        "prompt_tokens": prompt_tokens,
                        "completion_tokens": completion_tokens,
                        "total_tokens": prompt_tokens + completion_tokens
                    }
                });
                Ok(HttpReply::ok(reply.to_string()))
            }
        }
    }

    fn embeddings(&self, body: &Value) -> HttpReply {
        let inputs: Vec<&str> = match &body["input"] {
            Value::String(s) => vec![s.as_str()],
            Value::Array(items) => items.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let mut data = Vec::with_capacity(inputs.len());
        for (index, text) in inputs.iter().enumerate() {
            match fallback_embed(text, MOCK_EMBED_DIM, 0) {
                Ok(v) => data.push(json!({"index": index, "embedding": v.as_slice()})),
                Err(e) => return HttpReply { status: 400, body: e.to_string() },
            }
        }
        HttpReply::ok(json!({"object": "list", "data": data}).to_string())
    }
}

impl Transport for MockTransport {
    fn post_json(&self, url: &str, _bearer: Option<&str>, body: &Value) -> Result<HttpReply, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if url.ends_with("/embeddings") {
            Ok(self.embeddings(body))
        } else {
            self.chat(body)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ask(t: &MockTransport, prompt: &str) -> Result<HttpReply, TransportError> {
        t.post_json("mock:/chat/completions", None, &json!({"model": "m", "messages": [{"role": "user", "content": prompt}]}))
    }

    fn content(r: HttpReply) -> String {
        let v: Value = serde_json::from_str(&r.body).unwrap();
        v["choices"][0]["message"]["content"].as_str().unwrap().to_owned()
    }

    #[test]
    fn spec_parses_all_reply_shapes() {
        let spec: MockSpec = serde_json::from_str(
            r#"{"routes": [{"contains": "x", "responses": ["a", {"status": 503}, {"status": 401, "body": "no"}, {"timeout": true}]}]}"#,
        )
        .unwrap();
        assert_eq!(
            spec.routes[0].responses,
            vec![
                MockReply::Content("a".into()),
                MockReply::Status { status: 503, body: String::new() },
                MockReply::Status { status: 401, body: "no".into() },
                MockReply::Timeout { timeout: true }
            ]
        );
    }

    #[test]
    fn longest_route_wins_and_last_reply_repeats() {
        let spec = MockSpec {
            routes: vec![
                MockRoute { contains: "tickets".into(), responses: vec![MockReply::Content("short".into())] },
                MockRoute {
                    contains: "open tickets".into(),
                    responses: vec![MockReply::Content("one".into()), MockReply::Content("two".into())],
                },
            ],
            default: vec![MockReply::Content("fallback".into())],
        };
        let t = MockTransport::new(spec);
        assert_eq!(content(ask(&t, "count open tickets").unwrap()), "one");
        assert_eq!(content(ask(&t, "count open tickets").unwrap()), "two");
        assert_eq!(content(ask(&t, "count open tickets").unwrap()), "two");
        assert_eq!(content(ask(&t, "all tickets").unwrap()), "short");
        assert_eq!(content(ask(&t, "layovers").unwrap()), "fallback");
        assert_eq!(t.calls(), 5);
    }

    #[test]
    fn unmatched_without_default_is_404() {
        let t = MockTransport::new(MockSpec::default());
        assert_eq!(ask(&t, "anything").unwrap().status, 404);
    }
}
