//! Writes a mock provider directory whose replies echo each dataset
//! record's ground-truth SQL.
//!
//! cargo run -p softsql-pipeline --example build_echo_mock -- fixtures/dataset.jsonl fixtures/mock/echo

use std::path::PathBuf;

fn main() {
    let mut args = std::env::args_os().skip(1).map(PathBuf::from);
    let (Some(dataset), Some(dir)) = (args.next(), args.next()) else {
        eprintln!("usage: build_echo_mock DATASET.jsonl MOCK_DIR");
        std::process::exit(1);
    };
    let records = softsql_pipeline::load_dataset(&dataset).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(1);
    });
    let spec = softsql_pipeline::echo_mock_spec(&records);
    std::fs::create_dir_all(&dir).expect("create mock dir");
    let mut body = serde_json::to_string_pretty(&spec).expect("spec serializes");
    body.push('\n');
    std::fs::write(dir.join(softsql_llm::MOCK_FILE), body).expect("write mock.json");
    println!("{} routes -> {}", spec.routes.len(), dir.display());
}
