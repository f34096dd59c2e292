use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use softsql_core::{Difficulty, ExecOutcome};
use softsql_exec::Sandbox;

/// One curated question / SQL / answer triplet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub sql_query: String,
    pub answer: String,
    pub difficulty: Difficulty,
    pub gt_row_count: usize,
    pub created_at: String,
}

/// Content hash of the pair: sha256 over `sql_query`, a unit separator, and
/// `question`, hex encoded.
pub fn record_id(sql_query: &str, question: &str) -> String {
    let mut h = Sha256::new();
    h.update(sql_query.as_bytes());
    h.update([0x1f]);
    h.update(question.as_bytes());
    hex::encode(h.finalize())
}

/// RFC 3339 UTC timestamp for new artifacts. Honours `SOURCE_DATE_EPOCH`
/// so reruns can be made byte-identical.
pub fn artifact_timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    fixed.unwrap_or_else(chrono::Utc::now).to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: String, line: usize, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

/// Reads a JSONL dataset; blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| DatasetError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Writes `bytes` to a temp file beside `path`, then renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| DatasetError::Io { path: path.display().to_string(), source: e.error })?;
    Ok(())
}

/// Sorts by id and writes one JSON object per line, atomically.
pub fn write_dataset_atomic(path: &Path, records: &[DatasetRecord]) -> Result<(), DatasetError> {
    let mut sorted: Vec<&DatasetRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut buf = Vec::new();
    for r in sorted {
        serde_json::to_writer(&mut buf, r).expect("dataset records always serialize");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checked: usize,
    /// `(record id, reason)` for every record that failed re-validation.
    pub failures: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Re-executes every ground truth and checks its row count against the
/// stored value and the threshold.
pub fn validate_dataset(sandbox: &Sandbox, records: &[DatasetRecord], row_threshold: usize) -> ValidationReport {
    let mut report = ValidationReport { checked: records.len(), failures: vec![] };
    for r in records {
        let reason = match sandbox.execute(&r.sql_query) {
            ExecOutcome::Error { kind, message } => Some(format!("{kind}: {message}")),
            ExecOutcome::Grid(g) if g.row_count() != r.gt_row_count => {
                Some(format!("expected {} rows, got {}", r.gt_row_count, g.row_count()))
            }
            ExecOutcome::Grid(g) if g.row_count() > row_threshold => {
                Some(format!("{} rows exceeds threshold {row_threshold}", g.row_count()))
            }
            ExecOutcome::Grid(_) if r.id != record_id(&r.sql_query, &r.question) => Some("id does not match content".into()),
            ExecOutcome::Grid(_) => None,
        };
        if let Some(reason) = reason {
            report.failures.push((r.id.clone(), reason));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_stable_and_separated() {
        let a = record_id("SELECT 1", "one?");
        assert_eq!(a, record_id("SELECT 1", "one?"));
        assert_eq!(a.len(), 64);
        assert_ne!(record_id("ab", "c"), record_id("a", "bc"));
    }

    #[test]
    fn jsonl_round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/d.jsonl");
        let mk = |q: &str| DatasetRecord {
            id: record_id("SELECT 1", q),
            question: q.into(),
            sql_query: "SELECT 1".into(),
            answer: "1".into(),
            difficulty: Difficulty::Easy,
            gt_row_count: 1,
            created_at: "2024-01-01T00:00:00Z".into(),
        };
        let records = vec![mk("b"), mk("a"), mk("c")];
        write_dataset_atomic(&path, &records).unwrap();
        let back = load_dataset(&path).unwrap();
        let mut expect = records.clone();
        expect.sort_by(|x, y| x.id.cmp(&y.id));
        assert_eq!(back, expect);
        let line = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_owned();
        assert!(line.starts_with("{\"id\":"));
    }

    #[test]
    fn timestamps_are_rfc3339_utc() {
        let t = artifact_timestamp();
        assert!(chrono::DateTime::parse_from_rfc3339(&t).is_ok(), "{t}");
        assert!(t.ends_with('Z'));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "\n{\"id\": 1}\n").unwrap();
        match load_dataset(&path) {
            Err(DatasetError::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
