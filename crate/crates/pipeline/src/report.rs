use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use softsql_core::{aggregate_by_group, AggregateReport, Aggregation, Difficulty, EvalScore};

use crate::harness::{EvalRecord, ModeTag};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no evaluation records")]
    Empty,
    #[error("records mix runs: {0}")]
    MixedRuns(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Aggregated metrics for one partition, as percentages with one decimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub soft_f1: f64,
    pub accuracy: f64,
    pub error_count: usize,
    pub groups: usize,
    pub records: usize,
}

fn one_decimal_pct(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

impl From<&AggregateReport> for ReportRow {
    fn from(a: &AggregateReport) -> Self {
        ReportRow {
            soft_f1: one_decimal_pct(a.mean_soft_f1),
            accuracy: one_decimal_pct(a.mean_accuracy),
            error_count: a.error_count,
            groups: a.group_count,
            records: a.record_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model: String,
    pub mode: ModeTag,
    /// sha256 over the sorted record ids that were evaluated.
    pub dataset_hash: String,
    pub timestamp: String,
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub overall: ReportRow,
    pub by_difficulty: BTreeMap<Difficulty, ReportRow>,
    pub metadata: ReportMetadata,
}

fn aggregate(records: &[&EvalRecord], mode: Aggregation) -> ReportRow {
    let pairs: Vec<(&str, EvalScore)> = records.iter().map(|r| (r.gt_sql.as_str(), r.score)).collect();
    ReportRow::from(&aggregate_by_group(&pairs, mode).expect("partition is non-empty"))
}

/// Overall and per-difficulty aggregates for one model/mode run. Grouping by
/// ground-truth SQL is applied within each partition.
pub fn build_report(
    records: &[EvalRecord],
    mode: Aggregation,
    timestamp: Option<String>,
) -> Result<ReportTable, ReportError> {
    let first = records.first().ok_or(ReportError::Empty)?;
    if let Some(r) = records.iter().find(|r| r.model != first.model || r.mode != first.mode) {
        return Err(ReportError::MixedRuns(format!("{}/{} and {}/{}", first.model, first.mode, r.model, r.mode)));
    }
    let all: Vec<&EvalRecord> = records.iter().collect();
    let mut partitions: BTreeMap<Difficulty, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        partitions.entry(r.difficulty).or_default().push(r);
    }
    let ids: BTreeSet<&str> = records.iter().map(|r| r.record_id.as_str()).collect();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    Ok(ReportTable {
        overall: aggregate(&all, mode),
        by_difficulty: partitions.into_iter().map(|(d, rs)| (d, aggregate(&rs, mode))).collect(),
        metadata: ReportMetadata {
            model: first.model.clone(),
            mode: first.mode,
            dataset_hash: hex::encode(h.finalize()),
            timestamp: timestamp
                .unwrap_or_else(crate::dataset::artifact_timestamp),
            aggregation: mode,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}` (json, csv, markdown)")),
        }
    }
}

pub const CSV_HEADER: [&str; 7] = ["model", "mode", "partition", "soft_f1", "accuracy", "error_count", "groups"];

/// Renders one or more runs. JSON is an array of reports; CSV has one row
/// per run and partition; Markdown has a metric × mode grid, a per-run
/// difficulty table, and a run × difficulty soft-F1 grid.
pub fn render_report(reports: &[ReportTable], format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => render_csv(reports),
        ReportFormat::Markdown => Ok(render_markdown(reports)),
    }
}

fn render_csv(reports: &[ReportTable]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in reports {
        let rows = std::iter::once(("overall", &r.overall)).chain(r.by_difficulty.iter().map(|(d, row)| (d.as_str(), row)));
        for (partition, row) in rows {
            w.write_record([
                r.metadata.model.as_str(),
                r.metadata.mode.as_str(),
                partition,
                &format!("{:.1}", row.soft_f1),
                &format!("{:.1}", row.accuracy),
                &row.error_count.to_string(),
                &row.groups.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

fn render_markdown(reports: &[ReportTable]) -> String {
    let mut out = String::from("# Evaluation report\n\n");
    let modes: BTreeSet<ModeTag> = reports.iter().map(|r| r.metadata.mode).collect();
    let mut models: Vec<&str> = Vec::new();
    for r in reports {
        if !models.contains(&r.metadata.model.as_str()) {
            models.push(&r.metadata.model);
        }
    }
    let find = |model: &str, mode: ModeTag| reports.iter().find(|r| r.metadata.model == model && r.metadata.mode == mode);

    out.push_str("## Overall\n\n| Model |");
    for metric in ["Soft F1", "Accuracy", "Errors"] {
        for m in &modes {
            let _ = write!(out, " {metric} ({}) |", m.label());
        }
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(3 * modes.len()));
    out.push('\n');
    for model in &models {
        let _ = write!(out, "| {} |", md_cell(model));
        for metric in 0..3 {
            for m in &modes {
                let cell = match find(model, *m) {
                    None => "-".to_owned(),
                    Some(r) => match metric {
                        0 => format!("{:.1}", r.overall.soft_f1),
                        1 => format!("{:.1}", r.overall.accuracy),
                        _ => r.overall.error_count.to_string(),
                    },
                };
                let _ = write!(out, " {cell} |");
            }
        }
        out.push('\n');
    }

    for r in reports {
        let _ = write!(
            out,
            "\n## {} ({})\n\n| Difficulty | Soft F1 | Accuracy | Errors | Groups | Records |\n|---|---:|---:|---:|---:|---:|\n",
            md_cell(&r.metadata.model),
            r.metadata.mode.label()
        );
        for (d, row) in &r.by_difficulty {
            let _ = writeln!(
                out,
                "| {} | {:.1} | {:.1} | {} | {} | {} |",
                d.as_str(),
                row.soft_f1,
                row.accuracy,
                row.error_count,
                row.groups,
                row.records
            );
        }
    }

    let present: BTreeSet<Difficulty> = reports.iter().flat_map(|r| r.by_difficulty.keys().copied()).collect();
    out.push_str("\n## Soft F1 by difficulty\n\n| Model | Mode |");
    for d in &present {
        let _ = write!(out, " {} |", d.as_str());
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---:|".repeat(present.len()));
    out.push('\n');
    for r in reports {
        let _ = write!(out, "| {} | {} |", md_cell(&r.metadata.model), r.metadata.mode.label());
        for d in &present {
            match r.by_difficulty.get(d) {
                Some(row) => {
                    let _ = write!(out, " {:.1} |", row.soft_f1);
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}
