//! Sandboxed SQL execution against an embedded SQLite database.
//!
//! Connections are opened read-only, statements are checked for writes
//! before they run, and every query is bounded by a wall-clock timeout and
//! a hard row cap.

mod sandbox;
mod schema;

pub use sandbox::{canonicalize_value, execute_query, ExecLimits, Sandbox};
pub use schema::{load_descriptions, load_schema_doc, ColumnDoc, Descriptions, RelationshipNote, SchemaDoc, TableDoc};

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("sqlite: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("schema descriptions reference unknown columns: {}", .0.join(", "))]
    UnknownDescriptions(Vec<String>),
    #[error("relationship note references unknown tables: {}", .0.join(", "))]
    UnknownRelationshipTables(Vec<String>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// SQL script that creates the two-table maintenance fixture.
pub const FIXTURE_SQL: &str = include_str!("../../../fixtures/mro.sql");

/// Writes the maintenance fixture database to `path`, replacing any existing file.
pub fn build_fixture_db(path: &Path) -> Result<(), ExecError> {
    if path.exists() {
        std::fs::remove_file(path).map_err(|source| ExecError::Io { path: path.display().to_string(), source })?;
    }
    let conn = rusqlite::Connection::open(path)?;
    conn.execute_batch(FIXTURE_SQL)?;
    Ok(())
}
