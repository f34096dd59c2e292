//! SQL-first pair generation, execution and sufficiency filtering, and
//! persistence of the curated dataset.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use softsql_core::difficulty::classify_sql;
use softsql_core::{CountMode, Difficulty, ErrorKind, ExecOutcome, ResultGrid};
use softsql_exec::{ExecLimits, Sandbox, SchemaDoc};
use softsql_llm::{extract_json_payload, Gateway, LlmError, EVALUATION_TEMPERATURE, GENERATION_TEMPERATURE};

use crate::dataset::{record_id, write_atomic, write_dataset_atomic, DatasetError, DatasetRecord};
use crate::grid_text::render_grid;

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error("invalid datagen config: {0}")]
    Config(String),
    #[error("model output contained no usable pairs")]
    EmptyGeneration,
    #[error("judgment failed: {0}")]
    JudgmentFailed(String),
    #[error("provider failure: {0}")]
    Provider(#[from] LlmError),
    #[error("database: {0}")]
    Exec(#[from] softsql_exec::ExecError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenPair {
    pub sql_query: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerJudgment {
    pub reasoning: String,
    pub context_is_sufficient: bool,
    pub answer: String,
}

fn default_pairs_per_call() -> usize {
    10
}
fn default_target() -> usize {
    100
}
fn default_temperature() -> f64 {
    GENERATION_TEMPERATURE
}
fn default_threshold() -> usize {
    50
}
fn default_sample_rows() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenConfig {
    #[serde(default = "default_pairs_per_call")]
    pub pairs_per_call: usize,
    #[serde(default = "default_target")]
    pub target_size: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Inclusive: a result with exactly this many rows is kept.
    #[serde(default = "default_threshold")]
    pub result_row_threshold: usize,
    #[serde(default = "default_sample_rows")]
    pub sample_rows_per_table: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            pairs_per_call: default_pairs_per_call(),
            target_size: default_target(),
            temperature: default_temperature(),
            result_row_threshold: default_threshold(),
            sample_rows_per_table: default_sample_rows(),
            seed: 0,
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let positive = [
            ("pairs_per_call", self.pairs_per_call),
            ("target_size", self.target_size),
            ("result_row_threshold", self.result_row_threshold),
            ("sample_rows_per_table", self.sample_rows_per_table),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(DatagenError::Config(format!("{name} must be positive")));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(DatagenError::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }

    /// `ceil(10 * target_size / pairs_per_call)` generation calls at most.
    pub fn call_budget(&self) -> usize {
        (10 * self.target_size).div_ceil(self.pairs_per_call)
    }
}

fn example_heading(table: &str) -> String {
    format!("Example {table} data:")
}

/// Generation prompt: table explanations, sampled rows per table, then the
/// task and its notes. Tables without samples get an empty example section.
pub fn build_generation_prompt(schema: &SchemaDoc, samples: &[(String, ResultGrid)], cfg: &DatagenConfig) -> String {
    let mut p = String::new();
    for table in &schema.tables {
        p.push_str(&table.render());
    }
    if !schema.relationships.is_empty() {
        p.push_str("Relationships:\n");
        for r in &schema.relationships {
            let _ = writeln!(p, "- {}", r.note);
        }
    }
    p.push('\n');
    for table in &schema.tables {
        let _ = writeln!(p, "{}", example_heading(&table.name));
        if let Some((_, grid)) = samples.iter().find(|(t, _)| t == &table.name) {
            let _ = writeln!(p, "{}", render_grid(grid));
        }
        p.push('\n');
    }
    p.push_str(
        "Your task is to write a SQL query that able to answer a question.\n\
         First, you need to generate the sql query\n\
         Second, create question based on that sql query (what question is answered by the query)\n\
         \n\
         # IMPORTANT NOTE\n\
         - Your answer must be in JSON format, a list of dictionaries containing {\"sql_query\": <str>, \"question\": <str>}\n",
    );
    let _ = writeln!(p, "- The list must contain exactly {} dictionaries!", cfg.pairs_per_call);
    p.push_str(
        "- Ensure that you create reasoning on what kind of sql you need to create step-by-step Before answering in JSON!\n\
         - Create the reasoning first on top step-by-step, then generate all the JSON bellow it!\n\
         - The sql_query string must be a valid SQL query that can be executed on the database!\n\
         - Be creative and Create diverse and complete reasoning, sql query and its question!\n\
         - Also try to create difficult SQL that have very short question (yo may also consider to use abbreviations only)!\n\
         - Include a very difficult SQL that you can think of!\n\
         - Reasoning should be as complete as possible!\n",
    );
    p
}

fn pair_from(v: &Value) -> Result<GenPair, String> {
    let obj = v.as_object().ok_or("element is not an object")?;
    let field = |name: &str| -> Result<String, String> {
        match obj.get(name) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_owned()),
            Some(Value::String(_)) => Err(format!("`{name}` is empty")),
            Some(_) => Err(format!("`{name}` is not a string")),
            None => Err(format!("missing `{name}`")),
        }
    };
    Ok(GenPair { sql_query: field("sql_query")?, question: field("question")? })
}

/// Pairs from raw model output plus the reasons for each dropped element.
pub fn parse_pair_list(raw: &str) -> Result<(Vec<GenPair>, Vec<String>), DatagenError> {
    let payload = extract_json_payload(raw).map_err(|e| {
        tracing::warn!(error = %e, "generation output has no JSON payload");
        DatagenError::EmptyGeneration
    })?;
    let items = match payload {
        Value::Array(items) => items,
        obj @ Value::Object(_) => vec![obj],
        _ => vec![],
    };
    let mut pairs = Vec::new();
    let mut drops = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match pair_from(item) {
            Ok(p) => pairs.push(p),
            Err(reason) => {
                tracing::info!(element = i, %reason, "dropping malformed generated pair");
                drops.push(reason);
            }
        }
    }
    if pairs.is_empty() {
        return Err(DatagenError::EmptyGeneration);
    }
    Ok((pairs, drops))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<(GenPair, ResultGrid)>,
    pub dropped_stage1: usize,
    pub dropped_stage2: usize,
}

/// Stage 1 drops pairs whose SQL fails; stage 2 drops results with more than
/// `result_row_threshold` rows (or beyond the sandbox row cap).
pub fn filter_pairs(sandbox: &Sandbox, pairs: Vec<GenPair>, cfg: &DatagenConfig) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for pair in pairs {
        match sandbox.execute(&pair.sql_query) {
            ExecOutcome::Grid(g) if g.row_count() <= cfg.result_row_threshold => out.kept.push((pair, g)),
            ExecOutcome::Grid(g) => {
                tracing::debug!(rows = g.row_count(), sql = %pair.sql_query, "stage 2 drop: too many rows");
                out.dropped_stage2 += 1;
            }
            ExecOutcome::Error { kind: ErrorKind::RowCapExceeded, .. } => out.dropped_stage2 += 1,
            ExecOutcome::Error { kind, message } => {
                tracing::debug!(%kind, %message, sql = %pair.sql_query, "stage 1 drop: not executable");
                out.dropped_stage1 += 1;
            }
        }
    }
    out
}

pub fn build_answer_prompt(sql: &str, grid: &ResultGrid, question: &str) -> String {
    format!(
        "Answer the question based on retrieved context\n\
         # Guidelines :\n\
         1. Think step-by-step before answering using JSON format.\n\
         2. Think whether the context is relevant or not, and how to answer the question using the retrieved context\n\
         3. Answer with JSON format of the following format:\n\
         {{\n    \
         \"reasoning\": <str>, // Your thinking\n    \
         \"context_is_sufficient\" : <boolean>, // True if the context is sufficient to answer question, False if not\n    \
         \"answer\": <str> // string in human-readable answer\n\
         }}\n\
         \n\
         # SQL Query used for retrieval : {sql}\n\
         \n\
         # Retrieved Context\n\
         {context}\n\
         \n\
         # Question\n\
         {question}\n\
         \n\
         Answer in JSON format, and ensure that the \"answer\" part is human-readable:\n",
        context = render_grid(grid),
    )
}

/// Validates a judgment payload. Scalar answers are stringified; an answer
/// is required when the context is judged sufficient.
pub fn parse_judgment(raw: &str) -> Result<AnswerJudgment, String> {
    let v = extract_json_payload(raw).map_err(|e| e.to_string())?;
    let obj = v.as_object().ok_or("judgment is not a JSON object")?;
    let sufficient = match obj.get("context_is_sufficient") {
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => true,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => false,
        Some(other) => return Err(format!("context_is_sufficient is not a boolean: {other}")),
        None => return Err("missing context_is_sufficient".into()),
    };
    let text = |name: &str| match obj.get(name) {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.trim().to_owned(),
        Some(other) => other.to_string(),
    };
    let answer = text("answer");
    if sufficient && answer.is_empty() {
        return Err("sufficient context but empty answer".into());
    }
    Ok(AnswerJudgment { reasoning: text("reasoning"), context_is_sufficient: sufficient, answer })
}

/// Asks the judge at temperature 0, re-asking once if the reply is unusable.
pub fn judge_and_answer(gateway: &Gateway, pair: &GenPair, grid: &ResultGrid) -> Result<AnswerJudgment, DatagenError> {
    let prompt = build_answer_prompt(&pair.sql_query, grid, &pair.question);
    let mut last = String::new();
    for attempt in 0..2 {
        let reply = gateway.complete(&prompt, EVALUATION_TEMPERATURE)?;
        match parse_judgment(&reply.content) {
            Ok(j) => return Ok(j),
            Err(reason) => {
                tracing::info!(attempt, %reason, question = %pair.question, "unusable judgment");
                last = reason;
            }
        }
    }
    Err(DatagenError::JudgmentFailed(last))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatagenConfig,
    pub generated: usize,
    pub dropped_stage1: usize,
    pub dropped_stage2: usize,
    pub dropped_insufficient: usize,
    pub dropped_malformed: usize,
    pub dropped_judgment_failed: usize,
    pub duplicates: usize,
    pub generation_calls: usize,
    pub empty_generations: usize,
    pub call_budget: usize,
    pub target_reached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatagenSummary {
    pub manifest: Manifest,
    pub dataset_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// `dataset.jsonl` → `dataset.manifest.json`.
pub fn manifest_path_for(dataset: &Path) -> PathBuf {
    let stem = dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    dataset.with_file_name(format!("{stem}.manifest.json"))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_seed(seed: u64, call: usize, table: usize) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(call as u64)) ^ table as u64)
}

fn label(sql: &str) -> Difficulty {
    match classify_sql(sql, CountMode::Presence) {
        Ok((_, d)) => d,
        Err(e) => {
            tracing::warn!(error = %e, %sql, "could not lex executable SQL; labelling extra");
            Difficulty::Extra
        }
    }
}

fn judge_all(
    judge: &Gateway,
    kept: &[(GenPair, ResultGrid)],
) -> Vec<Result<AnswerJudgment, DatagenError>> {
    let workers = judge.config().max_in_flight.clamp(1, kept.len().max(1));
    let mut results: Vec<Option<Result<AnswerJudgment, DatagenError>>> = (0..kept.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = results.chunks_mut(kept.len().div_ceil(workers).max(1)).collect();
        let mut offset = 0;
        for chunk in chunks {
            let start = offset;
            offset += chunk.len();
            s.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    let (pair, grid) = &kept[start + i];
                    *slot = Some(judge_and_answer(judge, pair, grid));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every slot judged")).collect()
}

/// Runs generation calls until `target_size` records survive filtering or
/// the call budget runs out, then writes the dataset (sorted by id) and its
/// manifest atomically. Provider failures abort the run.
///
/// Every record is stamped with `created_at`; pass a fixed value for
/// byte-reproducible output.
#[allow(clippy::too_many_arguments)]
pub fn run_datagen(
    db: &Path,
    limits: ExecLimits,
    generator: &Gateway,
    judge: &Gateway,
    schema: &SchemaDoc,
    cfg: &DatagenConfig,
    out: &Path,
    created_at: &str,
) -> Result<DatagenSummary, DatagenError> {
    cfg.validate()?;
    if schema.tables.is_empty() {
        return Err(DatagenError::Config("schema has no tables".into()));
    }
    let sandbox = Sandbox::open(db, limits)?;
    let budget = cfg.call_budget();
    let mut records: Vec<DatasetRecord> = Vec::new();
    let mut ids: BTreeSet<String> = BTreeSet::new();
    let mut m = Manifest {
        config: cfg.clone(),
        generated: 0,
        dropped_stage1: 0,
        dropped_stage2: 0,
        dropped_insufficient: 0,
        dropped_malformed: 0,
        dropped_judgment_failed: 0,
        duplicates: 0,
        generation_calls: 0,
        empty_generations: 0,
        call_budget: budget,
        target_reached: false,
    };

    for call in 0..budget {
        if records.len() >= cfg.target_size {
            break;
        }
        let mut samples = Vec::with_capacity(schema.tables.len());
        for (t, table) in schema.tables.iter().enumerate() {
            let grid = sandbox.sample_rows(&table.name, cfg.sample_rows_per_table, sample_seed(cfg.seed, call, t))?;
            samples.push((table.name.clone(), grid));
        }
        let prompt = build_generation_prompt(schema, &samples, cfg);
        m.generation_calls += 1;
        let reply = generator.complete(&prompt, cfg.temperature)?;
        let (pairs, drops) = match parse_pair_list(&reply.content) {
            Ok(parsed) => parsed,
            Err(_) => {
                m.empty_generations += 1;
                continue;
            }
        };
        m.dropped_malformed += drops.len();

        let mut fresh = Vec::with_capacity(pairs.len());
        let mut seen_in_call = BTreeSet::new();
        for p in pairs {
            let id = record_id(&p.sql_query, &p.question);
            if ids.contains(&id) || !seen_in_call.insert(id) {
                m.duplicates += 1;
            } else {
                fresh.push(p);
            }
        }
        let filtered = filter_pairs(&sandbox, fresh, cfg);
        m.dropped_stage1 += filtered.dropped_stage1;
        m.dropped_stage2 += filtered.dropped_stage2;

        let judgments = judge_all(judge, &filtered.kept);
        for ((pair, grid), judgment) in filtered.kept.into_iter().zip(judgments) {
            let judgment = match judgment {
                Ok(j) => j,
                Err(DatagenError::JudgmentFailed(_)) => {
                    m.dropped_judgment_failed += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if !judgment.context_is_sufficient {
                m.dropped_insufficient += 1;
                continue;
            }
            if records.len() >= cfg.target_size {
                break;
            }
            let id = record_id(&pair.sql_query, &pair.question);
            ids.insert(id.clone());
            records.push(DatasetRecord {
                id,
                difficulty: label(&pair.sql_query),
                gt_row_count: grid.row_count(),
                question: pair.question,
                sql_query: pair.sql_query,
                answer: judgment.answer,
                created_at: created_at.to_owned(),
            });
        }
    }

    m.generated = records.len();
    m.target_reached = records.len() >= cfg.target_size;
    if !m.target_reached {
        tracing::warn!(generated = m.generated, target = cfg.target_size, "call budget exhausted below target");
    }
    write_dataset_atomic(out, &records)?;
    let manifest_path = manifest_path_for(out);
    let mut bytes = serde_json::to_vec_pretty(&m).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&manifest_path, &bytes)?;
    Ok(DatagenSummary { manifest: m, dataset_path: out.to_path_buf(), manifest_path })
}
