//! Canonical cell values and rectangular result grids.
//!
//! Every execution result that flows through the metrics is a [`ResultGrid`]:
//! named columns and a list of equally-sized rows of [`SqlValue`]s.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// Relative tolerance applied when comparing two reals.
pub const REAL_REL_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance applied to reals near zero.
pub const REAL_ABS_TOLERANCE: f64 = 1e-12;

/// A single cell produced by the execution sandbox.
#[derive(Debug, Clone, PartialEq)]
pub enum SqlValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl SqlValue {
    pub fn text(s: impl Into<String>) -> Self {
        SqlValue::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, SqlValue::Null)
    }

    /// Lowercase hex with a `0x` prefix, the wire form of blobs.
    pub fn blob_hex(bytes: &[u8]) -> String {
        format!("0x{}", hex::encode(bytes))
    }

    /// Parses the `0x`-prefixed lowercase hex wire form back into bytes.
    pub fn parse_blob_hex(s: &str) -> Option<Vec<u8>> {
        let digits = s.strip_prefix("0x")?;
        if digits.len() % 2 != 0 || !digits.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return None;
        }
        hex::decode(digits).ok()
    }
}

impl fmt::Display for SqlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SqlValue::Null => f.write_str("NULL"),
            SqlValue::Integer(i) => write!(f, "{i}"),
            SqlValue::Real(r) => write!(f, "{r:?}"),
            SqlValue::Text(s) => f.write_str(s),
            SqlValue::Blob(b) => f.write_str(&SqlValue::blob_hex(b)),
        }
    }
}

impl From<i64> for SqlValue {
    fn from(v: i64) -> Self {
        SqlValue::Integer(v)
    }
}

impl From<f64> for SqlValue {
    fn from(v: f64) -> Self {
        SqlValue::Real(v)
    }
}

impl From<&str> for SqlValue {
    fn from(v: &str) -> Self {
        SqlValue::Text(v.to_owned())
    }
}

impl Serialize for SqlValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SqlValue::Null => serializer.serialize_none(),
            SqlValue::Integer(i) => serializer.serialize_i64(*i),
            SqlValue::Real(r) => serializer.serialize_f64(*r),
            SqlValue::Text(s) => serializer.serialize_str(s),
            SqlValue::Blob(b) => serializer.serialize_str(&SqlValue::blob_hex(b)),
        }
    }
}

impl<'de> Deserialize<'de> for SqlValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ValueVisitor;

        impl<'de> Visitor<'de> for ValueVisitor {
            type Value = SqlValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("null, a number or a string")
            }

            fn visit_unit<E: de::Error>(self) -> Result<SqlValue, E> {
                Ok(SqlValue::Null)
            }

            fn visit_none<E: de::Error>(self) -> Result<SqlValue, E> {
                Ok(SqlValue::Null)
            }

            fn visit_some<D: Deserializer<'de>>(self, d: D) -> Result<SqlValue, D::Error> {
                SqlValue::deserialize(d)
            }

            fn visit_bool<E: de::Error>(self, v: bool) -> Result<SqlValue, E> {
                Ok(SqlValue::Integer(v as i64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<SqlValue, E> {
                Ok(SqlValue::Integer(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<SqlValue, E> {
                Ok(i64::try_from(v).map(SqlValue::Integer).unwrap_or(SqlValue::Real(v as f64)))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<SqlValue, E> {
                Ok(SqlValue::Real(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<SqlValue, E> {
                Ok(match SqlValue::parse_blob_hex(v) {
                    Some(bytes) => SqlValue::Blob(bytes),
                    None => SqlValue::Text(v.to_owned()),
                })
            }
        }

        deserializer.deserialize_any(ValueVisitor)
    }
}

/// Metric-level equality between two cells.
///
/// `NULL` equals `NULL`, integers equal reals holding exactly the same
/// integral value, and reals compare with a relative tolerance of 1e-9
/// (absolute 1e-12 near zero). Text and blobs compare byte for byte.
pub fn values_equal(a: &SqlValue, b: &SqlValue) -> bool {
    use SqlValue::*;
    match (a, b) {
        (Null, Null) => true,
        (Integer(x), Integer(y)) => x == y,
        (Integer(i), Real(r)) | (Real(r), Integer(i)) => real_is_integer(*r, *i),
        (Real(x), Real(y)) => reals_close(*x, *y),
        (Text(x), Text(y)) => x == y,
        (Blob(x), Blob(y)) => x == y,
        _ => false,
    }
}

/// `r` holds exactly the integral value `i`.
pub(crate) fn real_is_integer(r: f64, i: i64) -> bool {
    // 2^63 is exactly representable; anything at or beyond it cannot be an i64.
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    r.is_finite() && r.fract() == 0.0 && (-LIMIT..LIMIT).contains(&r) && r as i64 == i
}

pub(crate) fn reals_close(x: f64, y: f64) -> bool {
    if x.is_nan() || y.is_nan() {
        return x.is_nan() && y.is_nan();
    }
    if x == y {
        return true;
    }
    if !x.is_finite() || !y.is_finite() {
        return false;
    }
    let diff = (x - y).abs();
    diff <= REAL_ABS_TOLERANCE || diff <= REAL_REL_TOLERANCE * x.abs().max(y.abs())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
}

/// A rectangular execution result: `row_count × col_count` cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct ResultGrid {
    columns: Vec<String>,
    rows: Vec<Vec<SqlValue>>,
}

#[derive(Deserialize)]
struct RawGrid {
    columns: Vec<String>,
    rows: Vec<Vec<SqlValue>>,
}

impl TryFrom<RawGrid> for ResultGrid {
    type Error = GridError;

    fn try_from(raw: RawGrid) -> Result<Self, Self::Error> {
        ResultGrid::new(raw.columns, raw.rows)
    }
}

impl ResultGrid {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<SqlValue>>) -> Result<Self, GridError> {
        let expected = columns.len();
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != expected) {
            return Err(GridError::Ragged { row, found: r.len(), expected });
        }
        Ok(ResultGrid { columns, rows })
    }

    /// Builds a grid from column-major data; columns must share one length.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<SqlValue>>) -> Result<Self, GridError> {
        let height = columns.first().map_or(0, Vec::len);
        if let Some((idx, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != height) {
            return Err(GridError::Ragged { row: idx, found: c.len(), expected: height });
        }
        let rows = (0..height)
            .map(|r| columns.iter().map(|c| c[r].clone()).collect())
            .collect();
        ResultGrid::new(names, rows)
    }

    /// An `rows × cols` grid with generated column names.
    pub fn from_rows(rows: Vec<Vec<SqlValue>>) -> Result<Self, GridError> {
        let width = rows.first().map_or(0, Vec::len);
        let names = (0..width).map(|i| format!("c{i}")).collect();
        ResultGrid::new(names, rows)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<SqlValue>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn col_count(&self) -> usize {
        self.columns.len()
    }

    /// Cells of column `n`, top to bottom.
    pub fn column(&self, n: usize) -> Vec<&SqlValue> {
        self.rows.iter().map(|r| &r[n]).collect()
    }

    pub fn column_vectors(&self) -> Vec<Vec<&SqlValue>> {
        (0..self.col_count()).map(|n| self.column(n)).collect()
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<Vec<SqlValue>>) {
        (self.columns, self.rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Syntax,
    Schema,
    Timeout,
    RowCapExceeded,
    Other,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Syntax => "syntax",
            ErrorKind::Schema => "schema",
            ErrorKind::Timeout => "timeout",
            ErrorKind::RowCapExceeded => "row_cap_exceeded",
            ErrorKind::Other => "other",
        })
    }
}

/// Result of running one statement in the sandbox.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecOutcome {
    Grid(ResultGrid),
    Error { kind: ErrorKind, message: String },
}

impl ExecOutcome {
    /// Builds an error outcome; an empty message is replaced by the kind name.
    pub fn error(kind: ErrorKind, message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.trim().is_empty() {
            message = kind.to_string();
        }
        ExecOutcome::Error { kind, message }
    }

    pub fn grid(&self) -> Option<&ResultGrid> {
        match self {
            ExecOutcome::Grid(g) => Some(g),
            ExecOutcome::Error { .. } => None,
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, ExecOutcome::Error { .. })
    }
}
