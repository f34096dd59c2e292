use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rusqlite::types::ValueRef;
use rusqlite::{Connection, ErrorCode, OpenFlags};
use serde::{Deserialize, Serialize};
use softsql_core::{ErrorKind, ExecOutcome, ResultGrid, SqlValue};

use crate::ExecError;

/// Per-query safety limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    #[serde(rename = "timeout_ms", with = "millis")]
    pub timeout: Duration,
    /// Hard cap; a larger result is an error, never a truncation.
    pub row_cap: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits { timeout: Duration::from_secs(5), row_cap: 10_000 }
    }
}

impl ExecLimits {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.timeout.is_zero() {
            return Err(ExecError::InvalidArgument("timeout must be positive".into()));
        }
        if self.row_cap == 0 {
            return Err(ExecError::InvalidArgument("row_cap must be at least 1".into()));
        }
        Ok(())
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// Maps a raw SQLite cell onto the canonical value model by storage class.
pub fn canonicalize_value(raw: ValueRef<'_>) -> SqlValue {
    match raw {
        ValueRef::Null => SqlValue::Null,
        ValueRef::Integer(i) => SqlValue::Integer(i),
        ValueRef::Real(r) => SqlValue::Real(r),
        ValueRef::Text(bytes) => SqlValue::Text(String::from_utf8_lossy(bytes).into_owned()),
        ValueRef::Blob(bytes) => SqlValue::Blob(bytes.to_vec()),
    }
}

fn classify_error(err: &rusqlite::Error) -> ErrorKind {
    if let rusqlite::Error::SqliteFailure(e, _) = err {
        if e.code == ErrorCode::OperationInterrupted {
            return ErrorKind::Timeout;
        }
    }
    let msg = err.to_string().to_ascii_lowercase();
    if msg.contains("syntax error") || msg.contains("incomplete input") || msg.contains("unrecognized token") {
        ErrorKind::Syntax
    } else if msg.contains("no such table") || msg.contains("no such column") || msg.contains("ambiguous column") {
        ErrorKind::Schema
    } else {
        ErrorKind::Other
    }
}

fn failure(err: rusqlite::Error) -> ExecOutcome {
    ExecOutcome::error(classify_error(&err), err.to_string())
}

/// Runs one read-only statement under `limits`.
///
/// Never panics and never returns a truncated grid: every failure, including
/// a timeout or a result larger than the row cap, becomes an error outcome.
pub fn execute_query(conn: &Connection, sql: &str, limits: &ExecLimits) -> ExecOutcome {
    if sql.trim().is_empty() {
        return ExecOutcome::error(ErrorKind::Other, "empty SQL statement");
    }
    if has_trailing_statement(sql) {
        return ExecOutcome::error(ErrorKind::Other, "multiple statements are not permitted");
    }
    let mut stmt = match conn.prepare(sql) {
        Ok(stmt) => stmt,
        Err(err) => return failure(err),
    };
    if !stmt.readonly() {
        return ExecOutcome::error(ErrorKind::Other, "only read-only statements are permitted");
    }

    let deadline = Instant::now() + limits.timeout;
    conn.progress_handler(1_000, Some(move || Instant::now() >= deadline));
    let outcome = collect_grid(&mut stmt, limits);
    conn.progress_handler(0, None::<fn() -> bool>);
    outcome
}

/// True when anything but whitespace, comments or further semicolons follows
/// the first `;`. Unlexable input is left for SQLite to reject.
fn has_trailing_statement(sql: &str) -> bool {
    let Ok(stream) = softsql_core::tokenize_sql(sql) else {
        return false;
    };
    let is_semi = |t: &&softsql_core::difficulty::Token| {
        matches!(&t.kind, softsql_core::difficulty::TokenKind::Punctuation(p) if p == ";")
    };
    let mut tokens = stream.tokens.iter().skip_while(|t| !is_semi(t));
    tokens.any(|t| !is_semi(&t))
}

fn collect_grid(stmt: &mut rusqlite::Statement<'_>, limits: &ExecLimits) -> ExecOutcome {
    let columns: Vec<String> = stmt.column_names().into_iter().map(str::to_owned).collect();
    let width = columns.len();
    let mut rows_iter = match stmt.query([]) {
        Ok(rows) => rows,
        Err(err) => return failure(err),
    };
    let mut rows = Vec::new();
    loop {
        match rows_iter.next() {
            Ok(Some(row)) => {
                if rows.len() == limits.row_cap {
                    return ExecOutcome::error(
                        ErrorKind::RowCapExceeded,
                        format!("result exceeds the row cap of {}", limits.row_cap),
                    );
                }
                let mut cells = Vec::with_capacity(width);
                for i in 0..width {
                    match row.get_ref(i) {
                        Ok(v) => cells.push(canonicalize_value(v)),
                        Err(err) => return failure(err),
                    }
                }
                rows.push(cells);
            }
            Ok(None) => break,
            Err(err) => return failure(err),
        }
    }
    match ResultGrid::new(columns, rows) {
        Ok(grid) => ExecOutcome::Grid(grid),
        Err(err) => ExecOutcome::error(ErrorKind::Other, err.to_string()),
    }
}

/// One read-only connection plus its limits. Not shared across threads;
/// parallel workers each open their own.
pub struct Sandbox {
    conn: Connection,
    limits: ExecLimits,
}

impl Sandbox {
    pub fn open(path: &Path, limits: ExecLimits) -> Result<Self, ExecError> {
        limits.validate()?;
        if !path.exists() {
            return Err(ExecError::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "database file not found"),
            });
        }
        let flags = OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX;
        let conn = Connection::open_with_flags(path, flags)?;
        conn.execute_batch("PRAGMA query_only = ON;")?;
        Ok(Sandbox { conn, limits })
    }

    pub fn limits(&self) -> &ExecLimits {
        &self.limits
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    pub fn execute(&self, sql: &str) -> ExecOutcome {
        execute_query(&self.conn, sql, &self.limits)
    }

    pub fn schema_doc(
        &self,
        descriptions: &crate::Descriptions,
        relationships: Vec<crate::RelationshipNote>,
    ) -> Result<crate::SchemaDoc, ExecError> {
        crate::SchemaDoc::load(&self.conn, descriptions, relationships)
    }

    /// User tables in name order.
    pub fn table_names(&self) -> Result<Vec<String>, ExecError> {
        let mut stmt = self.conn.prepare(
            "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name",
        )?;
        let names = stmt.query_map([], |r| r.get::<_, String>(0))?.collect::<Result<_, _>>()?;
        Ok(names)
    }

    pub(crate) fn require_table(&self, table: &str) -> Result<(), ExecError> {
        if self.table_names()?.iter().any(|t| t == table) {
            Ok(())
        } else {
            Err(ExecError::UnknownTable(table.to_owned()))
        }
    }

    /// `min(k, |table|)` distinct rows chosen uniformly with a seeded RNG,
    /// returned in table order.
    pub fn sample_rows(&self, table: &str, k: usize, seed: u64) -> Result<ResultGrid, ExecError> {
        if k == 0 {
            return Err(ExecError::InvalidArgument("sample size must be at least 1".into()));
        }
        self.require_table(table)?;
        let sql = format!("SELECT * FROM \"{}\"", table.replace('"', "\"\""));
        let mut stmt = self.conn.prepare(&sql)?;
        let columns: Vec<String> = stmt.column_names().into_iter().map(str::to_owned).collect();
        let width = columns.len();
        let all: Vec<Vec<SqlValue>> = stmt
            .query_map([], |row| (0..width).map(|i| row.get_ref(i).map(canonicalize_value)).collect())?
            .collect::<Result<_, _>>()?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, all.len(), k.min(all.len())).into_vec();
        picked.sort_unstable();
        let rows = picked.into_iter().map(|i| all[i].clone()).collect();
        ResultGrid::new(columns, rows).map_err(|e| ExecError::InvalidArgument(e.to_string()))
    }
}
