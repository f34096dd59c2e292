#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use softsql_exec::{load_descriptions, ExecLimits, RelationshipNote, Sandbox, SchemaDoc};
use softsql_llm::{Gateway, MockReply, MockRoute, MockSpec, MockTransport, ProviderConfig};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn db() -> PathBuf {
    fixtures().join("mro.sqlite")
}

pub fn schema() -> SchemaDoc {
    let descriptions = load_descriptions(&fixtures().join("schema_descriptions.json")).unwrap();
    let rel = RelationshipNote {
        tables: vec!["tickets".into(), "aircraft_layovers".into()],
        note: "tickets.layover_id references aircraft_layovers.layover_id".into(),
    };
    Sandbox::open(&db(), ExecLimits::default()).unwrap().schema_doc(&descriptions, vec![rel]).unwrap()
}

pub fn gateway(spec: MockSpec) -> Gateway {
    let mut cfg = ProviderConfig::new("mock:in-memory", "mock", "");
    cfg.requests_per_minute = 100_000;
    cfg.max_in_flight = 4;
    cfg.backoff_base_ms = 1;
    Gateway::with_transport(cfg, Arc::new(MockTransport::new(spec))).unwrap()
}

pub fn route(contains: &str, replies: &[&str]) -> MockRoute {
    MockRoute { contains: contains.into(), responses: replies.iter().map(|r| MockReply::Content((*r).into())).collect() }
}

pub const GEN_MARKER: &str = "Your task is to write a SQL query";
pub const JUDGE_MARKER: &str = "Answer the question based on retrieved context";

pub fn sufficient() -> String {
    serde_json::json!({"reasoning": "rows answer it", "context_is_sufficient": true, "answer": "see rows"}).to_string()
}

/// Reasoning text followed by a JSON list of pairs.
pub fn pair_list(pairs: &[(String, String)]) -> String {
    let items: Vec<_> = pairs.iter().map(|(s, q)| serde_json::json!({"sql_query": s, "question": q})).collect();
    format!("Step by step: simple lookups first.\n```json\n{}\n```", serde_json::to_string_pretty(&items).unwrap())
}
