mod support;

use proptest::collection::vec;
use proptest::prelude::*;
use softsql_core::{column_pair_f1, execution_accuracy, soft_execution_f1, ResultGrid, SqlValue};
use support::oracle;

fn alphabet() -> Vec<SqlValue> {
    vec![SqlValue::Integer(1), SqlValue::Integer(2), SqlValue::text("x"), SqlValue::Null]
}

// Exercises integer/real cross-type equality and near-equal reals.
fn numeric_alphabet() -> Vec<SqlValue> {
    vec![SqlValue::Integer(1), SqlValue::Real(1.0), SqlValue::Real(1.5), SqlValue::Real(1.5 + 1e-13)]
}

fn grid_from(cols: usize, rows: Vec<Vec<SqlValue>>) -> ResultGrid {
    ResultGrid::new((0..cols).map(|i| format!("c{i}")).collect(), rows).unwrap()
}

fn grid_with(symbols: Vec<SqlValue>, max_rows: usize, max_cols: usize) -> impl Strategy<Value = ResultGrid> {
    (0..=max_rows, 0..=max_cols).prop_flat_map(move |(r, c)| {
        vec(vec(prop::sample::select(symbols.clone()), c), r).prop_map(move |rows| grid_from(c, rows))
    })
}

fn grid() -> impl Strategy<Value = ResultGrid> {
    grid_with(alphabet(), 6, 6)
}

fn permute_columns(g: &ResultGrid, order: &[usize]) -> ResultGrid {
    let names = order.iter().map(|&i| g.columns()[i].clone()).collect();
    let rows = g.rows().iter().map(|r| order.iter().map(|&i| r[i].clone()).collect()).collect();
    ResultGrid::new(names, rows).unwrap()
}

fn permute_rows(g: &ResultGrid, order: &[usize]) -> ResultGrid {
    ResultGrid::new(g.columns().to_vec(), order.iter().map(|&i| g.rows()[i].clone()).collect()).unwrap()
}

fn grid_and_row_order() -> impl Strategy<Value = (ResultGrid, Vec<usize>)> {
    grid().prop_flat_map(|g| {
        let order: Vec<usize> = (0..g.row_count()).collect();
        (Just(g), Just(order).prop_shuffle())
    })
}

fn grid_and_col_order() -> impl Strategy<Value = (ResultGrid, Vec<usize>)> {
    grid().prop_flat_map(|g| {
        let order: Vec<usize> = (0..g.col_count()).collect();
        (Just(g), Just(order).prop_shuffle())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn matches_brute_force_oracle(g in grid(), p in grid()) {
        let fast = soft_execution_f1(&g, &p).final_f1;
        prop_assert!((fast - oracle::soft_f1(&g, &p)).abs() <= 1e-12);
        prop_assert_eq!(execution_accuracy(&g, &p), oracle::accuracy(&g, &p));
    }

    #[test]
    fn matches_oracle_on_numeric_values(g in grid_with(numeric_alphabet(), 5, 4), p in grid_with(numeric_alphabet(), 5, 4)) {
        let fast = soft_execution_f1(&g, &p).final_f1;
        prop_assert!((fast - oracle::soft_f1(&g, &p)).abs() <= 1e-12);
        prop_assert_eq!(execution_accuracy(&g, &p), oracle::accuracy(&g, &p));
    }

    #[test]
    fn final_f1_in_unit_interval(g in grid(), p in grid()) {
        let b = soft_execution_f1(&g, &p);
        prop_assert!((0.0..=1.0).contains(&b.final_f1));
        prop_assert!((0.0..=1.0).contains(&b.column_precision));
        prop_assert!((0.0..=1.0).contains(&b.column_recall));
        if b.column_precision + b.column_recall == 0.0 {
            prop_assert_eq!(b.final_f1, 0.0);
        }
    }

    #[test]
    fn identity_scores_one(g in grid()) {
        prop_assume!(g.col_count() >= 1);
        prop_assert_eq!(soft_execution_f1(&g, &g).final_f1, 1.0);
        prop_assert!(execution_accuracy(&g, &g));
    }

    #[test]
    fn symmetric_in_arguments(g in grid(), p in grid()) {
        let a = soft_execution_f1(&g, &p);
        let b = soft_execution_f1(&p, &g);
        prop_assert!((a.final_f1 - b.final_f1).abs() <= 1e-12);
        prop_assert!((a.column_precision - b.column_recall).abs() <= 1e-12);
    }

    #[test]
    fn soft_f1_ignores_row_order((p, order) in grid_and_row_order(), g in grid()) {
        let shuffled = permute_rows(&p, &order);
        prop_assert_eq!(soft_execution_f1(&g, &p).final_f1, soft_execution_f1(&g, &shuffled).final_f1);
        prop_assert_eq!(soft_execution_f1(&p, &g).final_f1, soft_execution_f1(&shuffled, &g).final_f1);
    }

    #[test]
    fn both_metrics_ignore_column_order((p, order) in grid_and_col_order(), g in grid()) {
        let shuffled = permute_columns(&p, &order);
        let (a, b) = (soft_execution_f1(&g, &p).final_f1, soft_execution_f1(&g, &shuffled).final_f1);
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert_eq!(execution_accuracy(&g, &p), execution_accuracy(&g, &shuffled));
    }

    // Membership only sees which values occur on the searched side, and uniform
    // repetition of a column leaves both fractions unchanged.
    #[test]
    fn multiplicities_on_searched_side_are_invisible(
        g_col in vec(prop::sample::select(alphabet()), 1..6),
        p_col in vec(prop::sample::select(alphabet()), 1..6),
        reps in vec(1usize..4, 8),
        k in 1usize..4,
    ) {
        let remultiply = |col: &[SqlValue]| -> Vec<SqlValue> {
            let mut distinct: Vec<SqlValue> = Vec::new();
            for v in col {
                if !distinct.contains(v) {
                    distinct.push(v.clone());
                }
            }
            distinct.iter().zip(&reps).flat_map(|(v, n)| std::iter::repeat_n(v.clone(), *n)).collect()
        };
        let base = column_pair_f1(&g_col, &p_col);
        prop_assert_eq!(column_pair_f1(&remultiply(&g_col), &p_col).precision, base.precision);
        prop_assert_eq!(column_pair_f1(&g_col, &remultiply(&p_col)).recall, base.recall);
        let repeat = |col: &[SqlValue]| col.iter().cloned().cycle().take(col.len() * k).collect::<Vec<_>>();
        prop_assert_eq!(column_pair_f1(&repeat(&g_col), &repeat(&p_col)), base);
    }

    // A distinct key column pins the row order: any reordering that changes
    // the row sequence cannot be repaired by a column permutation.
    #[test]
    fn accuracy_detects_row_reordering((g, order) in grid_and_row_order()) {
        prop_assume!(g.row_count() >= 2);
        let keyed_rows: Vec<Vec<SqlValue>> = g
            .rows()
            .iter()
            .enumerate()
            .map(|(i, r)| std::iter::once(SqlValue::Integer(100 + i as i64)).chain(r.iter().cloned()).collect())
            .collect();
        let keyed = grid_from(g.col_count() + 1, keyed_rows);
        let shuffled = permute_rows(&keyed, &order);
        let identity = order.iter().enumerate().all(|(i, o)| i == *o);
        prop_assert_eq!(execution_accuracy(&keyed, &shuffled), identity);
    }

    #[test]
    fn accuracy_implies_full_recall((g, order) in grid_and_col_order(), mutate in any::<bool>()) {
        let mut p = permute_columns(&g, &order);
        if mutate && p.row_count() > 0 && p.col_count() > 0 {
            let (names, mut rows) = p.into_parts();
            rows[0][0] = SqlValue::text("mutated");
            p = ResultGrid::new(names, rows).unwrap();
        }
        if execution_accuracy(&g, &p) {
            let b = soft_execution_f1(&g, &p);
            prop_assert_eq!(b.column_recall, 1.0);
            prop_assert_eq!(b.final_f1, 1.0);
            for row in &b.pair_f1 {
                prop_assert!(row.contains(&1.0));
            }
        }
    }
}

#[test]
fn unrepairable_row_swap_counterexample_is_real() {
    // Without a key column a row swap can coincide with a column swap.
    let g = grid_from(2, vec![vec![1.into(), 2.into()], vec![2.into(), 1.into()]]);
    let swapped = permute_rows(&g, &[1, 0]);
    assert!(execution_accuracy(&g, &swapped));
    assert!(oracle::accuracy(&g, &swapped));
}
