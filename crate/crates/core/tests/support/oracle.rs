//! Brute-force reference implementations of the grid metrics.
//!
//! Written directly from the membership sums with nested loops and full
//! column-permutation enumeration. Shares nothing with the production code
//! path except `values_equal`.

#![allow(dead_code, clippy::needless_range_loop)]

use softsql_core::{values_equal, ResultGrid, SqlValue};

fn cell(g: &ResultGrid, row: usize, col: usize) -> &SqlValue {
    &g.rows()[row][col]
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// (precision, recall) of ground-truth column `n` against predicted column `t`.
pub fn pair_precision_recall(g: &ResultGrid, n: usize, p: &ResultGrid, t: usize) -> (f64, f64) {
    let (m_rows, s_rows) = (g.row_count(), p.row_count());
    if m_rows == 0 && s_rows == 0 {
        return (1.0, 1.0);
    }
    if m_rows == 0 || s_rows == 0 {
        return (0.0, 0.0);
    }
    let mut hits = 0usize;
    for s in 0..s_rows {
        let mut found = false;
        for m in 0..m_rows {
            if values_equal(cell(p, s, t), cell(g, m, n)) {
                found = true;
            }
        }
        if found {
            hits += 1;
        }
    }
    let precision = hits as f64 / s_rows as f64;
    let mut hits = 0usize;
    for m in 0..m_rows {
        let mut found = false;
        for s in 0..s_rows {
            if values_equal(cell(g, m, n), cell(p, s, t)) {
                found = true;
            }
        }
        if found {
            hits += 1;
        }
    }
    let recall = hits as f64 / m_rows as f64;
    (precision, recall)
}

pub fn soft_f1(g: &ResultGrid, p: &ResultGrid) -> f64 {
    let (n_cols, t_cols) = (g.col_count(), p.col_count());
    if n_cols == 0 && t_cols == 0 {
        return 1.0;
    }
    if n_cols == 0 || t_cols == 0 {
        return 0.0;
    }
    let mut matrix = vec![vec![0.0; t_cols]; n_cols];
    for n in 0..n_cols {
        for t in 0..t_cols {
            let (pr, rc) = pair_precision_recall(g, n, p, t);
            matrix[n][t] = f1(pr, rc);
        }
    }
    let mut precision = 0.0;
    for t in 0..t_cols {
        let mut best = 0.0f64;
        for row in &matrix {
            best = best.max(row[t]);
        }
        precision += best;
    }
    precision /= t_cols as f64;
    let mut recall = 0.0;
    for row in &matrix {
        recall += row.iter().copied().fold(0.0f64, f64::max);
    }
    recall /= n_cols as f64;
    f1(precision, recall)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(k - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out
}

/// Tries every assignment of predicted columns to ground-truth columns.
pub fn accuracy(g: &ResultGrid, p: &ResultGrid) -> bool {
    if g.row_count() != p.row_count() || g.col_count() != p.col_count() {
        return false;
    }
    permutations(g.col_count()).into_iter().any(|perm| {
        perm.iter().enumerate().all(|(n, &t)| {
            (0..g.row_count()).all(|r| values_equal(cell(g, r, n), cell(p, r, t)))
        })
    })
}
