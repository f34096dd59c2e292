//! Runs a candidate text-to-SQL provider over a dataset and scores each
//! prediction against its ground truth.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use softsql_core::{score_prediction, Difficulty, EvalScore, ExecOutcome};
use softsql_exec::{ExecLimits, Sandbox, SchemaDoc};
use softsql_llm::{extract_json_payload, Gateway, MockReply, MockRoute, MockSpec, EVALUATION_TEMPERATURE};

use crate::dataset::DatasetRecord;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("duplicate record id `{0}` in dataset")]
    DuplicateRecordId(String),
    #[error("ground truth of record `{record_id}` failed to execute ({message}); dataset and database do not match")]
    GroundTruthFailed { record_id: String, message: String },
    #[error("few-shot prompting needs exactly 4 examples, got {0}")]
    FewShotCount(usize),
    #[error("checkpoint {path} belongs to a different run: {reason}")]
    CheckpointMismatch { path: String, reason: String },
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("database: {0}")]
    Exec(#[from] softsql_exec::ExecError),
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::File { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    pub reasoning: String,
    pub sql: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptMode {
    ZeroShot,
    FewShot(Vec<FewShotExample>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeTag {
    Zero,
    Few,
}

impl ModeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeTag::Zero => "zero",
            ModeTag::Few => "few",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModeTag::Zero => "0-shot",
            ModeTag::Few => "few-shot",
        }
    }
}

impl std::fmt::Display for ModeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl PromptMode {
    pub fn few_shot(examples: Vec<FewShotExample>) -> Result<Self, HarnessError> {
        if examples.len() != 4 {
            return Err(HarnessError::FewShotCount(examples.len()));
        }
        Ok(PromptMode::FewShot(examples))
    }

    pub fn tag(&self) -> ModeTag {
        match self {
            PromptMode::ZeroShot => ModeTag::Zero,
            PromptMode::FewShot(_) => ModeTag::Few,
        }
    }
}

/// Reads the few-shot example file (a JSON array of exactly 4 examples).
pub fn load_few_shot(path: &Path) -> Result<Vec<FewShotExample>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let examples: Vec<FewShotExample> = serde_json::from_str(&text).map_err(|e| file_err(path, e))?;
    if examples.len() != 4 {
        return Err(HarnessError::FewShotCount(examples.len()));
    }
    Ok(examples)
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// The block that introduces the question to answer. The question is JSON
/// encoded, so quotes and newlines in it cannot break the prompt layout.
pub fn target_question_block(question: &str) -> String {
    format!("# Question to answer\n{}\n", json_string(question))
}

pub fn build_sql_gen_prompt(schema: &SchemaDoc, question: &str, mode: &PromptMode) -> String {
    let mut p = String::from(
        "You are an expert data analyst. Write a SQLite query that answers the question below using the database described here.\n\n# Database schema\n",
    );
    for table in &schema.tables {
        p.push_str(&table.render());
        p.push('\n');
    }
    if !schema.relationships.is_empty() {
        p.push_str("# Relationships\n");
        for r in &schema.relationships {
            let _ = writeln!(p, "- {}", r.note);
        }
        p.push('\n');
    }
    p.push_str(
        "# Instructions\n\
         - Use only the tables and columns listed above.\n\
         - Think through the question step by step first, then write the query.\n\
         - Reply with one JSON object: {\"reasoning\": <str>, \"sql\": <str>}. Put your reasoning first, then the SQL query.\n\n",
    );
    if let PromptMode::FewShot(examples) = mode {
        p.push_str("# Examples\n");
        for (i, ex) in examples.iter().enumerate() {
            let answer = serde_json::json!({"reasoning": ex.reasoning, "sql": ex.sql});
            let _ = write!(p, "## Example {}\nQuestion: {}\nAnswer: {}\n\n", i + 1, json_string(&ex.question), answer);
        }
    }
    p.push_str(&target_question_block(question));
    p
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlResponse {
    pub reasoning: String,
    pub sql: String,
}

/// Why no SQL could be taken from a reply.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NoSql {
    #[error("no JSON payload: {0}")]
    Unparseable(String),
    #[error("payload has no non-empty `sql` field")]
    MissingSql,
}

pub fn parse_sql_response(raw: &str) -> Result<SqlResponse, NoSql> {
    let v = extract_json_payload(raw).map_err(|e| NoSql::Unparseable(e.to_string()))?;
    let Value::Object(obj) = v else {
        return Err(NoSql::MissingSql);
    };
    let sql = match obj.get("sql") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_owned(),
        _ => return Err(NoSql::MissingSql),
    };
    let reasoning = obj.get("reasoning").and_then(Value::as_str).unwrap_or_default().to_owned();
    Ok(SqlResponse { reasoning, sql })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub record_id: String,
    pub gt_sql: String,
    pub predicted_sql: Option<String>,
    pub score: EvalScore,
    pub difficulty: Difficulty,
    pub latency_ms: u64,
    pub mode: ModeTag,
    pub model: String,
    /// Why the prediction scored as an execution error, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    /// Equality ignoring wall-clock latency.
    pub fn same_outcome(&self, other: &EvalRecord) -> bool {
        EvalRecord { latency_ms: 0, ..self.clone() } == EvalRecord { latency_ms: 0, ..other.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub limits: ExecLimits,
    pub workers: usize,
    /// JSONL of completed records; existing entries are reused on resume.
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
    /// Stop after this many newly evaluated records (simulated interruption).
    pub stop_after: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { limits: ExecLimits::default(), workers: 4, checkpoint: None, checkpoint_every: 20, stop_after: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    /// In dataset order. Incomplete when `stop_after` interrupted the run.
    pub records: Vec<EvalRecord>,
    pub resumed: usize,
    pub provider_failures: usize,
    pub complete: bool,
}

pub fn load_eval_records(path: &Path) -> Result<Vec<EvalRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| file_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| file_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            // A torn final line from an interrupted write is ignored.
            Err(e) if e.is_eof() => tracing::warn!(line = i + 1, "ignoring truncated checkpoint line"),
            Err(e) => return Err(file_err(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

struct Outcome {
    index: usize,
    record: EvalRecord,
    provider_failure: bool,
}

fn evaluate_one(
    gateway: &Gateway,
    sandbox: &Sandbox,
    schema: &SchemaDoc,
    mode: &PromptMode,
    rec: &DatasetRecord,
    gt: &ExecOutcome,
) -> (EvalRecord, bool) {
    let prompt = build_sql_gen_prompt(schema, &rec.question, mode);
    let started = Instant::now();
    let reply = gateway.complete(&prompt, EVALUATION_TEMPERATURE);
    let latency_ms = started.elapsed().as_millis() as u64;
    let base = EvalRecord {
        record_id: rec.id.clone(),
        gt_sql: rec.sql_query.clone(),
        predicted_sql: None,
        score: EvalScore::ERROR,
        difficulty: rec.difficulty,
        latency_ms,
        mode: mode.tag(),
        model: gateway.model().to_owned(),
        error: None,
    };
    let content = match reply {
        Ok(r) => r.content,
        Err(e) => return (EvalRecord { error: Some(format!("provider: {e}")), ..base }, e.is_provider_failure()),
    };
    let parsed = match parse_sql_response(&content) {
        Ok(p) => p,
        Err(e) => return (EvalRecord { error: Some(format!("no_sql: {e}")), ..base }, false),
    };
    let pred = sandbox.execute(&parsed.sql);
    let score = score_prediction(gt, &pred).expect("ground truth grids are checked before scoring");
    let error = match &pred {
        ExecOutcome::Error { kind, message } => Some(format!("{kind}: {message}")),
        ExecOutcome::Grid(_) => None,
    };
    (EvalRecord { predicted_sql: Some(parsed.sql), score, error, ..base }, false)
}

/// Evaluates every record, reusing completed records from the checkpoint.
///
/// Ground truths are executed once per distinct SQL before any provider call;
/// a failing ground truth aborts the run. Prediction failures of any kind
/// become execution-error records. Records whose provider call failed are
/// returned but not checkpointed, so a resumed run retries them.
pub fn evaluate_dataset(
    dataset: &[DatasetRecord],
    gateway: &Gateway,
    db: &Path,
    schema: &SchemaDoc,
    mode: &PromptMode,
    opts: &EvalOptions,
) -> Result<EvalRun, HarnessError> {
    if dataset.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = dataset.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(HarnessError::DuplicateRecordId(dup.id.clone()));
    }

    let sandbox = Sandbox::open(db, opts.limits)?;
    let mut gt_cache: HashMap<&str, ExecOutcome> = HashMap::new();
    for rec in dataset {
        if gt_cache.contains_key(rec.sql_query.as_str()) {
            continue;
        }
        let out = sandbox.execute(&rec.sql_query);
        if let ExecOutcome::Error { message, .. } = &out {
            return Err(HarnessError::GroundTruthFailed { record_id: rec.id.clone(), message: message.clone() });
        }
        gt_cache.insert(rec.sql_query.as_str(), out);
    }
    drop(sandbox);

    let mut done: BTreeMap<usize, EvalRecord> = BTreeMap::new();
    if let Some(path) = opts.checkpoint.as_deref().filter(|p| p.exists()) {
        let index: HashMap<&str, usize> = dataset.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        let loaded = load_eval_records(path)?;
        // Rewrite without any torn tail so appended records start on a fresh line.
        let mut clean = Vec::new();
        for r in &loaded {
            serde_json::to_writer(&mut clean, r).map_err(|e| file_err(path, e))?;
            clean.push(b'\n');
        }
        crate::dataset::write_atomic(path, &clean).map_err(|e| file_err(path, e))?;
        for r in loaded {
            if r.model != gateway.model() || r.mode != mode.tag() {
                return Err(HarnessError::CheckpointMismatch {
                    path: path.display().to_string(),
                    reason: format!("record for {}/{} in a {}/{} run", r.model, r.mode, gateway.model(), mode.tag()),
                });
            }
            match index.get(r.record_id.as_str()) {
                Some(&i) => {
                    done.insert(i, r);
                }
                None => tracing::warn!(record = %r.record_id, "checkpoint record not in dataset; ignored"),
            }
        }
    }
    let resumed = done.len();
    let pending: Vec<usize> = (0..dataset.len()).filter(|i| !done.contains_key(i)).collect();

    let mut writer = match opts.checkpoint.as_deref() {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
            }
            let f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| file_err(path, e))?;
            Some((path, BufWriter::new(f)))
        }
        None => None,
    };

    let next = AtomicUsize::new(0);
    let claimed = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = opts.workers.clamp(1, pending.len().max(1));
    let mut provider_failures = 0;
    let mut since_flush = 0;
    let mut write_error = None;

    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<Outcome>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, next, claimed, stop, gt_cache) = (&pending, &next, &claimed, &stop, &gt_cache);
            s.spawn(move || {
                let sandbox = match Sandbox::open(db, opts.limits) {
                    Ok(sb) => sb,
                    Err(e) => {
                        tracing::error!(error = %e, "worker could not open the database");
                        stop.store(true, Ordering::SeqCst);
                        return;
                    }
                };
                loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Some(limit) = opts.stop_after {
                        if claimed.fetch_add(1, Ordering::SeqCst) >= limit {
                            break;
                        }
                    }
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&index) = pending.get(k) else { break };
                    let rec = &dataset[index];
                    let gt = &gt_cache[rec.sql_query.as_str()];
                    let (record, provider_failure) = evaluate_one(gateway, &sandbox, schema, mode, rec, gt);
                    if tx.send(Outcome { index, record, provider_failure }).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);

        for out in rx {
            if out.provider_failure {
                provider_failures += 1;
            } else if let Some((path, w)) = writer.as_mut() {
                let res = serde_json::to_writer(&mut *w, &out.record)
                    .map_err(|e| e.to_string())
                    .and_then(|_| w.write_all(b"\n").map_err(|e| e.to_string()));
                if let Err(e) = res {
                    write_error.get_or_insert_with(|| file_err(path, e));
                    stop.store(true, Ordering::SeqCst);
                }
                since_flush += 1;
                if since_flush >= opts.checkpoint_every.max(1) {
                    since_flush = 0;
                    if let Err(e) = w.flush() {
                        write_error.get_or_insert_with(|| file_err(path, e));
                    }
                }
            }
            done.insert(out.index, out.record);
        }
    });

    if let Some((path, w)) = writer.as_mut() {
        w.flush().map_err(|e| file_err(path, e))?;
    }
    if let Some(e) = write_error {
        return Err(e);
    }
    let complete = done.len() == dataset.len();
    Ok(EvalRun { records: done.into_values().collect(), resumed, provider_failures, complete })
}

/// Mock routes answering each dataset question with its own ground-truth
/// SQL, keyed on the question block of the evaluation prompt.
pub fn echo_mock_spec(dataset: &[DatasetRecord]) -> MockSpec {
    let routes = dataset
        .iter()
        .map(|r| {
            let reply = serde_json::json!({"reasoning": "Echoing the reference query.", "sql": r.sql_query});
            MockRoute { contains: target_question_block(&r.question), responses: vec![MockReply::Content(reply.to_string())] }
        })
        .collect();
    MockSpec { routes, default: vec![MockReply::Content("I do not know which query answers that.".into())] }
}
