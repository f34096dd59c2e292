use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn mock(dir: &Path, name: &str, spec: Value) -> String {
    let d = dir.join(name);
    std::fs::create_dir_all(&d).unwrap();
    std::fs::write(d.join("mock.json"), spec.to_string()).unwrap();
    format!("mock:{}", d.display())
}

/// A config over the fixture database with a few extra failing providers.
fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let provider = |name: &str, url: String| json!({"name": name, "base_url": url, "model": name, "requests_per_minute": 60000, "max_retries": 0});
    let unauthorized = mock(dir.path(), "unauthorized", json!({"default": [{"status": 401, "body": "bad key"}]}));
    let overloaded = mock(dir.path(), "overloaded", json!({"default": [{"status": 503}]}));
    let config = json!({
        "database": f.join("mro.sqlite"),
        "schema_descriptions": f.join("schema_descriptions.json"),
        "few_shot_examples": f.join("few_shot_examples.json"),
        "dataset": f.join("dataset.jsonl"),
        "generation_provider": {"base_url": format!("mock:{}", f.join("mock/generate").display()), "model": "gen", "requests_per_minute": 60000},
        "evaluation_providers": [
            provider("mock-echo", format!("mock:{}", f.join("mock/echo").display())),
            provider("mock-prose", format!("mock:{}", f.join("mock/prose").display())),
            provider("unauthorized", unauthorized),
            provider("overloaded", overloaded),
        ],
        "datagen": {"pairs_per_call": 8, "target_size": 24, "seed": 7},
        "output_dir": dir.path().join("out"),
    });
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config.to_string()).unwrap();
    (dir, cfg)
}

fn softsql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softsql")).args(args).env("SOURCE_DATE_EPOCH", "1704067200").output().unwrap()
}

fn with_config(cfg: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--config", cfg.to_str().unwrap()];
    all.extend_from_slice(args);
    softsql(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let o = softsql(&["--config", "/nonexistent/softsql.json", "validate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/softsql.json"), "{}", stderr(&o));

    let o = softsql(&["validate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_1_and_help_exits_0() {
    assert_eq!(softsql(&["frobnicate"]).status.code(), Some(1));
    let (_dir, cfg) = setup();
    assert_eq!(with_config(&cfg, &["evaluate", "--model", "mock-echo", "--mode", "half"]).status.code(), Some(1));
    let o = with_config(&cfg, &["evaluate", "--model", "nobody", "--mode", "zero"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mock-echo"), "known names listed: {}", stderr(&o));
    let help = softsql(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("evaluate"));
}

#[test]
fn classify_labels_the_fixture_queries() {
    let (dir, cfg) = setup();
    let input = fixtures().join("classify_queries.jsonl");
    let o = with_config(&cfg, &["classify", "--in", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for line in std::fs::read_to_string(&input).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let expected = format!("{}\t{}", v["id"].as_str().unwrap(), v["expected"].as_str().unwrap());
        assert!(out.lines().any(|l| l == expected), "missing `{expected}`");
    }
    assert!(out.contains("| Difficulty | Count | % |"));
    let written: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/classify.json")).unwrap()).unwrap();
    assert_eq!(written["records"].as_array().unwrap().len(), 20);

    // A wrong expectation makes the run partial.
    let wrong = dir.path().join("wrong.jsonl");
    std::fs::write(&wrong, r#"{"id": "w", "sql_query": "SELECT 1", "expected": "extra"}"#).unwrap();
    assert_eq!(with_config(&cfg, &["classify", "--in", wrong.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn evaluate_echo_is_perfect_and_report_rerenders() {
    let (dir, cfg) = setup();
    let o = with_config(&cfg, &["evaluate", "--model", "mock-echo", "--mode", "zero"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("| mock-echo | 100.0 | 100.0 | 0 |"), "{}", stdout(&o));

    let records = dir.path().join("out/eval-mock-echo-zero.jsonl");
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 24);
    let o = with_config(&cfg, &["report", "--in", records.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().next().unwrap().contains("soft_f1"));
    assert!(dir.path().join("out/report.csv").exists());

    // Few-shot mode is a separate run with its own checkpoint.
    let o = with_config(&cfg, &["evaluate", "--model", "mock-echo", "--mode", "few"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("out/eval-mock-echo-few.jsonl").exists());
}

#[test]
fn unparseable_replies_count_as_errors_not_failures() {
    let (_dir, cfg) = setup();
    let o = with_config(&cfg, &["evaluate", "--model", "mock-prose", "--mode", "zero", "--raw"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("| mock-prose | 0.0 | 0.0 | 24 |"), "{}", stdout(&o));
}

#[test]
fn provider_failures_exit_3() {
    let (dir, cfg) = setup();
    for model in ["unauthorized", "overloaded"] {
        let o = with_config(&cfg, &["evaluate", "--model", model, "--mode", "zero", "--fresh"]);
        assert_eq!(o.status.code(), Some(3), "{model}: {}", stderr(&o));
        let checkpoint = dir.path().join(format!("out/eval-{model}-zero.jsonl"));
        let kept = std::fs::read_to_string(checkpoint).unwrap_or_default();
        assert_eq!(kept.lines().count(), 0, "{model}: failed records are not checkpointed");
    }
}

#[test]
fn generate_short_of_target_is_partial() {
    let (dir, cfg) = setup();
    let o = with_config(&cfg, &["generate", "--target", "60"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let written = std::fs::read_to_string(dir.path().join("out/dataset.jsonl")).unwrap();
    assert!(!written.is_empty() && written.lines().count() < 60);
}

#[test]
fn generate_then_validate_and_diversity() {
    let (dir, cfg) = setup();
    let o = with_config(&cfg, &["generate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let generated = dir.path().join("out/dataset.jsonl");
    assert_eq!(std::fs::read(&generated).unwrap(), std::fs::read(fixtures().join("dataset.jsonl")).unwrap());

    let o = with_config(&cfg, &["validate", "--in", generated.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let first = with_config(&cfg, &["--seed", "3", "diversity", "--in", generated.to_str().unwrap()]);
    let second = with_config(&cfg, &["--seed", "3", "diversity", "--in", generated.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("sql_query"));
}

#[test]
fn validate_flags_broken_records() {
    let (dir, cfg) = setup();
    let broken = dir.path().join("broken.jsonl");
    let mut line: Value = serde_json::from_str(std::fs::read_to_string(fixtures().join("dataset.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    line["sql_query"] = json!("SELECT nope FROM nowhere");
    std::fs::write(&broken, format!("{line}\n")).unwrap();
    assert_eq!(with_config(&cfg, &["validate", "--in", broken.to_str().unwrap()]).status.code(), Some(2));
}
