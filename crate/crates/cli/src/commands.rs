use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use softsql_core::difficulty::{classify_sql, difficulty_distribution, syntax_usage};
use softsql_core::diversity::{avg_max_similarity, exact_match_stats, MatchStats, SimilaritySummary};
use softsql_core::{Aggregation, ComponentCounts, CountMode, Difficulty};
use softsql_exec::{load_descriptions, Sandbox, SchemaDoc};
use softsql_llm::{EmbeddingConfig, Gateway, LlmError, ProviderConfig};
use softsql_pipeline::{
    artifact_timestamp, build_report, evaluate_dataset, load_dataset, load_eval_records, load_few_shot, render_report,
    run_datagen, validate_dataset, DatagenError, DatasetRecord, EvalOptions, EvalRecord, HarnessError, PromptMode,
    ReportFormat, ReportTable,
};

use crate::{
    AppConfig, Cli, CliError, Command, EvaluateArgs, FormatArg, GenerateArgs, InputArgs, ModeArg, ReportArgs,
    EXIT_OK, EXIT_PARTIAL, EXIT_PROVIDER,
};

// Results go to stdout; a closed pipe (`softsql ... | head`) is not an error.
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout().lock(), $($t)*);
    }};
}

pub fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let cfg = AppConfig::load(path)?;
    let ctx = Ctx { out: cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone()), seed: cli.seed, cfg };
    match &cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Classify(a) => classify(&ctx, a),
        Command::Diversity(a) => diversity(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Validate(a) => validate(&ctx, a),
    }
}

struct Ctx {
    cfg: AppConfig,
    out: PathBuf,
    seed: Option<u64>,
}

impl Ctx {
    fn dataset(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.cfg.dataset.clone())
            .unwrap_or_else(|| self.out.join("dataset.jsonl"))
    }

    fn out_file(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Failed(format!("creating {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    fn schema(&self) -> Result<SchemaDoc, CliError> {
        let descriptions = load_descriptions(&self.cfg.schema_descriptions).map_err(config_err)?;
        let sandbox = Sandbox::open(&self.cfg.database, self.cfg.exec_limits).map_err(config_err)?;
        sandbox.schema_doc(&descriptions, self.cfg.relationships.clone()).map_err(config_err)
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn gateway(p: &ProviderConfig) -> Result<Gateway, CliError> {
    Gateway::new(p.clone()).map_err(llm_err)
}

fn llm_err(e: LlmError) -> CliError {
    match e {
        LlmError::Config(m) => CliError::Config(m),
        other if other.is_provider_failure() => CliError::Provider(other.to_string()),
        other => CliError::Failed(other.to_string()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("outputs serialize");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| CliError::Failed(format!("writing {}: {e}", path.display())))
}

fn read_jsonl(path: &Path) -> Result<Vec<Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn generate(ctx: &Ctx, args: &GenerateArgs) -> Result<i32, CliError> {
    let mut dcfg = ctx.cfg.datagen.clone();
    if let Some(seed) = ctx.seed {
        dcfg.seed = seed;
    }
    if let Some(target) = args.target {
        dcfg.target_size = target;
    }
    dcfg.validate().map_err(config_err)?;
    let schema = ctx.schema()?;
    let generator = gateway(&ctx.cfg.generation_provider)?;
    let judge = gateway(ctx.cfg.judge_provider.as_ref().unwrap_or(&ctx.cfg.generation_provider))?;
    let out = ctx.out_file("dataset.jsonl")?;
    let summary = run_datagen(
        &ctx.cfg.database,
        ctx.cfg.exec_limits,
        &generator,
        &judge,
        &schema,
        &dcfg,
        &out,
        &artifact_timestamp(),
    )
    .map_err(|e| match e {
        DatagenError::Provider(e) => llm_err(e),
        DatagenError::Config(m) => CliError::Config(m),
        other => CliError::Failed(other.to_string()),
    })?;
    let m = &summary.manifest;
    outln!(
        "generated {}/{} records in {} calls (stage 1 drops {}, stage 2 drops {}, insufficient {}, malformed {}, judgment failures {}, duplicates {})",
        m.generated,
        m.config.target_size,
        m.generation_calls,
        m.dropped_stage1,
        m.dropped_stage2,
        m.dropped_insufficient,
        m.dropped_malformed,
        m.dropped_judgment_failed,
        m.duplicates
    );
    outln!("dataset: {}", summary.dataset_path.display());
    outln!("manifest: {}", summary.manifest_path.display());
    if m.target_reached {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: call budget of {} exhausted below the target size", m.call_budget);
        Ok(EXIT_PARTIAL)
    }
}

#[derive(Serialize)]
struct Classified {
    id: String,
    difficulty: Option<Difficulty>,
    counts: Option<ComponentCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn sql_field(v: &Value) -> Option<&str> {
    v.get("sql_query").or_else(|| v.get("sql")).and_then(Value::as_str)
}

fn classify(ctx: &Ctx, args: &InputArgs) -> Result<i32, CliError> {
    let path = ctx.dataset(args.input.as_deref());
    let rows = read_jsonl(&path)?;
    let mut records = Vec::with_capacity(rows.len());
    let mut sqls = Vec::with_capacity(rows.len());
    for (i, v) in rows.iter().enumerate() {
        let sql = sql_field(v)
            .ok_or_else(|| CliError::Usage(format!("{}: record {} has no sql_query", path.display(), i + 1)))?;
        let id = v.get("id").and_then(Value::as_str).map_or_else(|| format!("#{}", i + 1), str::to_owned);
        let expected = v.get("expected").and_then(Value::as_str).map(str::to_owned);
        sqls.push(sql.to_owned());
        records.push(match classify_sql(sql, CountMode::Presence) {
            Ok((counts, d)) => Classified { id, difficulty: Some(d), counts: Some(counts), expected, error: None },
            Err(e) => Classified { id, difficulty: None, counts: None, expected, error: Some(e.to_string()) },
        });
    }
    let labels: Vec<Difficulty> = records.iter().filter_map(|r| r.difficulty).collect();
    let distribution = difficulty_distribution(&labels);
    let usage = syntax_usage(&sqls);

    let mut mismatches = 0;
    for r in &records {
        let label = r.difficulty.map_or("unlexable", Difficulty::as_str);
        let note = match &r.expected {
            Some(e) if e != label => {
                mismatches += 1;
                format!("\texpected {e}")
            }
            _ => String::new(),
        };
        outln!("{}\t{label}{note}", r.id);
    }
    outln!();
    outln!("| Difficulty | Count | % |\n|---|---:|---:|");
    for s in &distribution {
        outln!("| {} | {} | {:.2} |", s.difficulty, s.count, s.percentage);
    }
    outln!();
    outln!("| Construct | Count | % |\n|---|---:|---:|");
    for c in &usage.constructs {
        outln!("| {} | {} | {:.2} |", c.construct.label(), c.count, c.percentage);
    }

    let unlexable = records.iter().filter(|r| r.error.is_some()).count();
    let out = ctx.out_file("classify.json")?;
    write_json(&out, &json!({"records": records, "distribution": distribution, "syntax_usage": usage}))?;
    if unlexable + mismatches > 0 {
        eprintln!("warning: {unlexable} unlexable queries, {mismatches} labels differ from `expected`");
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FieldDiversity {
    field: &'static str,
    exact_match: MatchStats,
    similarity: Option<SimilaritySummary>,
}

fn diversity(ctx: &Ctx, args: &InputArgs) -> Result<i32, CliError> {
    let path = ctx.dataset(args.input.as_deref());
    let rows = read_jsonl(&path)?;
    let mut embedding = ctx.cfg.embedding.clone();
    if let (EmbeddingConfig::Fallback { seed, .. }, Some(s)) = (&mut embedding, ctx.seed) {
        *seed = s;
    }
    let embedder = embedding.build().map_err(llm_err)?;
    let mut fields = Vec::new();
    for field in ["question", "sql_query", "answer"] {
        let texts: Vec<String> = rows.iter().filter_map(|v| v.get(field).and_then(Value::as_str)).map(str::to_owned).collect();
        if texts.is_empty() {
            continue;
        }
        let exact_match = exact_match_stats(&texts).map_err(|e| CliError::Failed(e.to_string()))?;
        let similarity = if texts.len() >= 2 {
            let vectors = embedder.embed(&texts).map_err(|e| CliError::Provider(e.to_string()))?;
            Some(avg_max_similarity(&vectors).map_err(|e| CliError::Failed(e.to_string()))?)
        } else {
            None
        };
        fields.push(FieldDiversity { field, exact_match, similarity });
    }
    if fields.is_empty() {
        return Err(CliError::Usage(format!("{}: no question, sql_query or answer fields", path.display())));
    }
    outln!("| Field | Exact match | % | Avg max sim | Std |\n|---|---:|---:|---:|---:|");
    for f in &fields {
        let (mean, std) = f.similarity.as_ref().map_or(("n/a".into(), "n/a".into()), |s| {
            (format!("{:.4}", s.mean_max_sim), format!("{:.4}", s.std_max_sim))
        });
        outln!(
            "| {} | {} | {:.2} | {mean} | {std} |",
            f.field, f.exact_match.duplicate_count, f.exact_match.duplicate_pct
        );
    }
    write_json(&ctx.out_file("diversity.json")?, &fields)?;
    Ok(EXIT_OK)
}

fn harness_err(e: HarnessError) -> CliError {
    match e {
        HarnessError::EmptyDataset | HarnessError::DuplicateRecordId(_) | HarnessError::FewShotCount(_) => {
            CliError::Usage(e.to_string())
        }
        HarnessError::GroundTruthFailed { .. } | HarnessError::Exec(_) => CliError::Config(e.to_string()),
        other => CliError::Failed(other.to_string()),
    }
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, CliError> {
    load_dataset(path).map_err(|e| CliError::Usage(e.to_string()))
}

fn rewrite_records(path: &Path, records: &[EvalRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    std::fs::write(&tmp, buf)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| CliError::Failed(format!("writing {}: {e}", path.display())))
}

fn write_reports(ctx: &Ctx, stem: &str, tables: &[ReportTable]) -> Result<(), CliError> {
    for (format, ext) in [(ReportFormat::Json, "json"), (ReportFormat::Markdown, "md"), (ReportFormat::Csv, "csv")] {
        let text = render_report(tables, format).map_err(|e| CliError::Failed(e.to_string()))?;
        let path = ctx.out_file(&format!("{stem}.{ext}"))?;
        std::fs::write(&path, text).map_err(|e| CliError::Failed(format!("writing {}: {e}", path.display())))?;
    }
    Ok(())
}

fn aggregation(raw: bool) -> Aggregation {
    if raw {
        Aggregation::Raw
    } else {
        Aggregation::Grouped
    }
}

fn evaluate(ctx: &Ctx, args: &EvaluateArgs) -> Result<i32, CliError> {
    let provider = ctx.cfg.evaluation_provider(&args.model)?;
    let mode = match args.mode {
        ModeArg::Zero => PromptMode::ZeroShot,
        ModeArg::Few => {
            let path = ctx.cfg.few_shot_examples.as_deref().ok_or_else(|| {
                CliError::Config("few-shot evaluation needs `few_shot_examples` in the config".into())
            })?;
            PromptMode::few_shot(load_few_shot(path).map_err(harness_err)?).map_err(harness_err)?
        }
    };
    let dataset = load_records(&ctx.dataset(args.dataset.as_deref()))?;
    let schema = ctx.schema()?;
    let gw = gateway(provider)?;
    let stem = format!("{}-{}", args.model, mode.tag());
    let checkpoint = ctx.out_file(&format!("eval-{stem}.jsonl"))?;
    if args.fresh && checkpoint.exists() {
        std::fs::remove_file(&checkpoint)
            .map_err(|e| CliError::Failed(format!("removing {}: {e}", checkpoint.display())))?;
    }
    let opts = EvalOptions {
        limits: ctx.cfg.exec_limits,
        workers: ctx.cfg.eval_workers,
        checkpoint: Some(checkpoint.clone()),
        ..EvalOptions::default()
    };
    let run = evaluate_dataset(&dataset, &gw, &ctx.cfg.database, &schema, &mode, &opts).map_err(harness_err)?;
    if run.provider_failures == 0 {
        // Same content as the checkpoint, in dataset order.
        rewrite_records(&checkpoint, &run.records)?;
    }
    let table = build_report(&run.records, aggregation(args.raw), None).map_err(|e| CliError::Failed(e.to_string()))?;
    let tables = [table];
    write_reports(ctx, &format!("report-{stem}"), &tables)?;
    out!("{}", render_report(&tables, ReportFormat::Markdown).map_err(|e| CliError::Failed(e.to_string()))?);
    outln!("records: {}", checkpoint.display());
    if run.resumed > 0 {
        eprintln!("resumed {} records from the checkpoint", run.resumed);
    }
    if run.provider_failures > 0 {
        eprintln!(
            "error: {} provider calls failed; they are scored as errors above and retried on the next run",
            run.provider_failures
        );
        return Ok(EXIT_PROVIDER);
    }
    Ok(EXIT_OK)
}

fn report(ctx: &Ctx, args: &ReportArgs) -> Result<i32, CliError> {
    let mut runs: BTreeMap<(String, String), Vec<EvalRecord>> = BTreeMap::new();
    for path in &args.inputs {
        for r in load_eval_records(path).map_err(|e| CliError::Usage(e.to_string()))? {
            runs.entry((r.model.clone(), r.mode.to_string())).or_default().push(r);
        }
    }
    if runs.is_empty() {
        return Err(CliError::Usage("no evaluation records in the inputs".into()));
    }
    let tables = runs
        .values()
        .map(|rs| build_report(rs, aggregation(args.raw), None))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let (format, ext) = match args.format {
        FormatArg::Json => (ReportFormat::Json, "json"),
        FormatArg::Csv => (ReportFormat::Csv, "csv"),
        FormatArg::Markdown => (ReportFormat::Markdown, "md"),
    };
    let text = render_report(&tables, format).map_err(|e| CliError::Failed(e.to_string()))?;
    let path = ctx.out_file(&format!("report.{ext}"))?;
    std::fs::write(&path, &text).map_err(|e| CliError::Failed(format!("writing {}: {e}", path.display())))?;
    out!("{text}");
    Ok(EXIT_OK)
}

fn validate(ctx: &Ctx, args: &InputArgs) -> Result<i32, CliError> {
    let path = ctx.dataset(args.input.as_deref());
    let records = load_records(&path)?;
    let sandbox = Sandbox::open(&ctx.cfg.database, ctx.cfg.exec_limits).map_err(config_err)?;
    let report = validate_dataset(&sandbox, &records, ctx.cfg.datagen.result_row_threshold);
    for (id, reason) in &report.failures {
        outln!("FAIL\t{id}\t{reason}");
    }
    outln!("{} of {} records re-validated", report.checked - report.failures.len(), report.checked);
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_PARTIAL })
}
