//! Execution-based scoring of a predicted result grid against ground truth.
//!
//! Three measures are provided:
//!
//! - **Execution accuracy**: strict. Dimensions must agree and every column
//!   must pair one-to-one with a column holding identical values in the same
//!   row order.
//! - **Soft execution F1**: graded. Each ground-truth column `n` is compared
//!   with each predicted column `t` by value membership:
//!
//!   ```text
//!   precision(n,t) = |{s : P[s,t] ∈ G[:,n]}| / S
//!   recall(n,t)    = |{m : G[m,n] ∈ P[:,t]}| / M
//!   ```
//!
//!   The best pair score per predicted column gives the column-level
//!   precision, the best per ground-truth column the column-level recall,
//!   and their harmonic mean is the final score.
//! - **Execution errors**: predictions that did not produce a grid.
//!
//! Scores are aggregated with a two-step mean: first within groups sharing
//! one normalized ground-truth SQL string, then across groups.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::diversity::normalize_text;
use crate::value::{real_is_integer, reals_close, ExecOutcome, ResultGrid, SqlValue};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("ground-truth query did not execute: {0}")]
    GroundTruthFailed(String),
    #[error("cannot aggregate an empty set of records")]
    EmptyInput,
}

/// Precision, recall and F1 for a single (ground-truth, predicted) column pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PairScore {
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        PairScore { precision, recall, f1: harmonic_mean(precision, recall) }
    }
}

/// F1 of a precision/recall pair, zero when both are zero.
pub fn harmonic_mean(precision: f64, recall: f64) -> f64 {
    let denom = precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / denom
    }
}

/// Full breakdown of one soft-F1 comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftF1Breakdown {
    /// `pair_f1[n][t]`: ground-truth column `n` against predicted column `t`.
    pub pair_f1: Vec<Vec<f64>>,
    pub column_precision: f64,
    pub column_recall: f64,
    pub final_f1: f64,
}

/// Per-prediction scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScore {
    pub soft_f1: f64,
    pub exact: bool,
    pub exec_error: bool,
}

impl EvalScore {
    /// The score of a prediction that failed to execute or to parse.
    pub const ERROR: EvalScore = EvalScore { soft_f1: 0.0, exact: false, exec_error: true };
}

/// Hash key for values compared exactly.
#[derive(Debug, PartialEq, Eq, Hash)]
enum ExactKey<'a> {
    Null,
    Int(i64),
    Text(&'a str),
    Blob(&'a [u8]),
}

/// Membership index over one column under [`crate::values_equal`] semantics.
struct ValueSet<'a> {
    exact: HashSet<ExactKey<'a>>,
    reals: Vec<f64>,
    has_nan: bool,
    has_pos_inf: bool,
    has_neg_inf: bool,
}

impl<'a> ValueSet<'a> {
    fn new<I: IntoIterator<Item = &'a SqlValue>>(cells: I) -> Self {
        let mut set = ValueSet {
            exact: HashSet::new(),
            reals: Vec::new(),
            has_nan: false,
            has_pos_inf: false,
            has_neg_inf: false,
        };
        for v in cells {
            match v {
                SqlValue::Null => {
                    set.exact.insert(ExactKey::Null);
                }
                SqlValue::Integer(i) => {
                    set.exact.insert(ExactKey::Int(*i));
                }
                SqlValue::Text(s) => {
                    set.exact.insert(ExactKey::Text(s));
                }
                SqlValue::Blob(b) => {
                    set.exact.insert(ExactKey::Blob(b));
                }
                SqlValue::Real(r) if r.is_nan() => set.has_nan = true,
                SqlValue::Real(r) if *r == f64::INFINITY => set.has_pos_inf = true,
                SqlValue::Real(r) if *r == f64::NEG_INFINITY => set.has_neg_inf = true,
                SqlValue::Real(r) => set.reals.push(*r),
            }
        }
        set.reals.sort_by(f64::total_cmp);
        set.reals.dedup();
        set
    }

    /// Finite reals in `[lo, hi]`.
    fn reals_between(&self, lo: f64, hi: f64) -> &[f64] {
        let start = self.reals.partition_point(|x| *x < lo);
        let end = self.reals.partition_point(|x| *x <= hi);
        &self.reals[start..end.max(start)]
    }

    fn contains(&self, v: &SqlValue) -> bool {
        match v {
            SqlValue::Null => self.exact.contains(&ExactKey::Null),
            SqlValue::Text(s) => self.exact.contains(&ExactKey::Text(s)),
            SqlValue::Blob(b) => self.exact.contains(&ExactKey::Blob(b)),
            SqlValue::Integer(i) => {
                if self.exact.contains(&ExactKey::Int(*i)) {
                    return true;
                }
                let x = *i as f64;
                self.reals_between(x, x).iter().any(|r| real_is_integer(*r, *i))
            }
            SqlValue::Real(r) if r.is_nan() => self.has_nan,
            SqlValue::Real(r) if *r == f64::INFINITY => self.has_pos_inf,
            SqlValue::Real(r) if *r == f64::NEG_INFINITY => self.has_neg_inf,
            SqlValue::Real(r) => {
                let r = *r;
                if r.fract() == 0.0 && real_is_integer(r, r as i64) && self.exact.contains(&ExactKey::Int(r as i64)) {
                    return true;
                }
                // Any b with |r - b| <= 1e-9 * max(|r|, |b|) lies within 2e-9 * |r| of r.
                let half_width = (2.0 * crate::value::REAL_REL_TOLERANCE * r.abs())
                    .max(crate::value::REAL_ABS_TOLERANCE);
                self.reals_between(r - half_width, r + half_width)
                    .iter()
                    .any(|b| reals_close(r, *b))
            }
        }
    }

    fn count_members<'b, I: IntoIterator<Item = &'b SqlValue>>(&self, cells: I) -> usize {
        cells.into_iter().filter(|v| self.contains(v)).count()
    }
}

struct IndexedColumn<'a> {
    cells: Vec<&'a SqlValue>,
    set: ValueSet<'a>,
}

impl<'a> IndexedColumn<'a> {
    fn new(cells: Vec<&'a SqlValue>) -> Self {
        let set = ValueSet::new(cells.iter().copied());
        IndexedColumn { cells, set }
    }
}

fn pair_score(g: &IndexedColumn<'_>, p: &IndexedColumn<'_>) -> PairScore {
    let (m, s) = (g.cells.len(), p.cells.len());
    match (m, s) {
        (0, 0) => return PairScore::from_precision_recall(1.0, 1.0),
        (0, _) | (_, 0) => return PairScore::from_precision_recall(0.0, 0.0),
        _ => {}
    }
    let precision = g.set.count_members(p.cells.iter().copied()) as f64 / s as f64;
    let recall = p.set.count_members(g.cells.iter().copied()) as f64 / m as f64;
    PairScore::from_precision_recall(precision, recall)
}

/// Membership precision/recall of a predicted column against a ground-truth column.
///
/// Two empty columns score 1; exactly one empty column scores 0.
pub fn column_pair_f1(g_col: &[SqlValue], p_col: &[SqlValue]) -> PairScore {
    let g = IndexedColumn::new(g_col.iter().collect());
    let p = IndexedColumn::new(p_col.iter().collect());
    pair_score(&g, &p)
}

/// Soft execution F1 of `pred` against ground truth `gt`.
pub fn soft_execution_f1(gt: &ResultGrid, pred: &ResultGrid) -> SoftF1Breakdown {
    let (n_cols, t_cols) = (gt.col_count(), pred.col_count());
    if n_cols == 0 || t_cols == 0 {
        let score = if n_cols == t_cols { 1.0 } else { 0.0 };
        return SoftF1Breakdown {
            pair_f1: vec![Vec::new(); n_cols],
            column_precision: score,
            column_recall: score,
            final_f1: score,
        };
    }

    let g_cols: Vec<IndexedColumn<'_>> = gt.column_vectors().into_iter().map(IndexedColumn::new).collect();
    let p_cols: Vec<IndexedColumn<'_>> = pred.column_vectors().into_iter().map(IndexedColumn::new).collect();

    let pair_f1: Vec<Vec<f64>> = g_cols
        .iter()
        .map(|g| p_cols.iter().map(|p| pair_score(g, p).f1).collect())
        .collect();

    let best_for_pred = (0..t_cols).map(|t| pair_f1.iter().map(|row| row[t]).fold(0.0, f64::max));
    let column_precision = best_for_pred.sum::<f64>() / t_cols as f64;
    let column_recall = pair_f1
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .sum::<f64>()
        / n_cols as f64;

    SoftF1Breakdown {
        pair_f1,
        column_precision,
        column_recall,
        final_f1: harmonic_mean(column_precision, column_recall),
    }
}

fn columns_identical(a: &[&SqlValue], b: &[&SqlValue]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| crate::values_equal(x, y))
}

/// Strict execution accuracy.
///
/// False when the dimensions differ. Otherwise true iff the columns of the two
/// grids admit a perfect one-to-one matching in which matched columns hold
/// equal values in the same row order.
pub fn execution_accuracy(gt: &ResultGrid, pred: &ResultGrid) -> bool {
    if gt.row_count() != pred.row_count() || gt.col_count() != pred.col_count() {
        return false;
    }
    let g_cols = gt.column_vectors();
    let p_cols = pred.column_vectors();
    let adjacency: Vec<Vec<usize>> = g_cols
        .iter()
        .map(|g| (0..p_cols.len()).filter(|&t| columns_identical(g, &p_cols[t])).collect())
        .collect();
    if adjacency.iter().any(Vec::is_empty) {
        return false;
    }
    maximum_matching(&adjacency, p_cols.len()) == g_cols.len()
}

/// Size of a maximum bipartite matching (augmenting paths).
fn maximum_matching(adjacency: &[Vec<usize>], right_len: usize) -> usize {
    fn augment(u: usize, adjacency: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adjacency[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adjacency, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }

    let mut owner = vec![None; right_len];
    let mut matched = 0;
    for u in 0..adjacency.len() {
        let mut seen = vec![false; right_len];
        if augment(u, adjacency, &mut seen, &mut owner) {
            matched += 1;
        }
    }
    matched
}

/// Scores one prediction. The ground truth must have executed.
pub fn score_prediction(gt: &ExecOutcome, pred: &ExecOutcome) -> Result<EvalScore, MetricsError> {
    let gt = match gt {
        ExecOutcome::Grid(g) => g,
        ExecOutcome::Error { message, .. } => return Err(MetricsError::GroundTruthFailed(message.clone())),
    };
    Ok(match pred {
        ExecOutcome::Error { .. } => EvalScore::ERROR,
        ExecOutcome::Grid(p) => EvalScore {
            soft_f1: soft_execution_f1(gt, p).final_f1,
            exact: execution_accuracy(gt, p),
            exec_error: false,
        },
    })
}

/// How per-record scores are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean within each ground-truth SQL group, then mean across groups.
    #[default]
    Grouped,
    /// Plain mean over records.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mean_soft_f1: f64,
    pub mean_accuracy: f64,
    pub error_count: usize,
    /// Distinct normalized ground-truth SQL strings.
    pub group_count: usize,
    pub record_count: usize,
}

// Sorted before summation so the result does not depend on input order.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Aggregates `(ground-truth SQL, score)` records.
///
/// Ground-truth SQL is grouped after lowercasing and trimming. The error count
/// is always the raw number of records with `exec_error`.
pub fn aggregate_by_group<S: AsRef<str>>(
    records: &[(S, EvalScore)],
    mode: Aggregation,
) -> Result<AggregateReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut groups: BTreeMap<String, Vec<&EvalScore>> = BTreeMap::new();
    for (sql, score) in records {
        groups.entry(normalize_text(sql.as_ref())).or_default().push(score);
    }
    let accuracy = |s: &EvalScore| if s.exact { 1.0 } else { 0.0 };
    let (mean_soft_f1, mean_accuracy) = match mode {
        Aggregation::Grouped => {
            let per_group: Vec<(f64, f64)> = groups
                .values()
                .map(|scores| {
                    (
                        order_free_mean(scores.iter().map(|s| s.soft_f1).collect()),
                        order_free_mean(scores.iter().map(|s| accuracy(s)).collect()),
                    )
                })
                .collect();
            (
                order_free_mean(per_group.iter().map(|g| g.0).collect()),
                order_free_mean(per_group.iter().map(|g| g.1).collect()),
            )
        }
        Aggregation::Raw => (
            order_free_mean(records.iter().map(|(_, s)| s.soft_f1).collect()),
            order_free_mean(records.iter().map(|(_, s)| accuracy(s)).collect()),
        ),
    };
    Ok(AggregateReport {
        mean_soft_f1,
        mean_accuracy,
        error_count: records.iter().filter(|(_, s)| s.exec_error).count(),
        group_count: groups.len(),
        record_count: records.len(),
    })
}
