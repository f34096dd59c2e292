use proptest::prelude::*;
use softsql_core::difficulty::{classify, classify_sql, component_counts, tokenize_sql, ComponentCounts, CountMode, Difficulty};

type Rule = fn(u32, u32, u32) -> bool;

/// The hardness table as data, one entry per row, in evaluation order.
fn rule_rows() -> Vec<(Difficulty, Rule)> {
    vec![
        (Difficulty::Easy, |a, b, c| a <= 1 && b == 0 && c == 0),
        (Difficulty::Medium, |a, b, c| a <= 1 && b <= 2 && c == 0),
        (Difficulty::Medium, |a, b, c| a <= 2 && b <= 1 && c == 0),
        (Difficulty::Hard, |a, b, c| a <= 2 && b > 2 && c == 0),
        (Difficulty::Hard, |a, b, c| a > 2 && a <= 3 && b <= 2 && c == 0),
        (Difficulty::Hard, |a, b, c| a <= 1 && b == 0 && c <= 1),
    ]
}

#[test]
fn truth_table_is_total_and_first_match() {
    let mut cells = 0;
    for comp1 in 0..=7 {
        for comp2 in 0..=3 {
            for other in 0..=3 {
                let expected = rule_rows()
                    .into_iter()
                    .find(|(_, rule)| rule(comp1, comp2, other))
                    .map_or(Difficulty::Extra, |(label, _)| label);
                assert_eq!(classify(ComponentCounts::new(comp1, comp2, other)), expected, "({comp1},{comp2},{other})");
                cells += 1;
            }
        }
    }
    assert_eq!(cells, 128);
}

#[test]
fn single_component_increase_never_goes_below_easy() {
    for (d1, d2, d3) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
        for k in 0..=3 {
            let label = classify(ComponentCounts::new(d1 * k, d2 * k, d3 * k));
            assert!(label >= Difficulty::Easy);
        }
    }
}

#[derive(serde::Deserialize)]
struct Labeled {
    id: String,
    sql_query: String,
    expected: Difficulty,
    expected_counts: [u32; 3],
}

#[test]
fn labeled_fixture_matches() {
    let text = include_str!("../../../fixtures/classify_queries.jsonl");
    let rows: Vec<Labeled> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 20);
    for row in rows {
        let (counts, label) = classify_sql(&row.sql_query, CountMode::Presence).unwrap();
        let [a, b, c] = row.expected_counts;
        assert_eq!(counts, ComponentCounts::new(a, b, c), "{}", row.id);
        assert_eq!(label, row.expected, "{}", row.id);
    }
}

const KEYWORDS: [&str; 12] = [
    "WHERE", "GROUP BY", "ORDER BY", "LIMIT", "JOIN", "OR", "LIKE", "EXCEPT", "UNION", "INTERSECT", "SELECT", "HAVING",
];

const BASES: [&str; 4] = [
    "SELECT a FROM t WHERE b = ",
    "SELECT a, COUNT(*) FROM t GROUP BY a HAVING MAX(b) = ",
    "SELECT a FROM t UNION SELECT a FROM u WHERE c <> ",
    "SELECT (SELECT 1) AS x FROM t WHERE y LIKE ",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn literal_immunity(base in prop::sample::select(BASES.to_vec()), kws in prop::collection::vec(prop::sample::select(KEYWORDS.to_vec()), 1..4)) {
        let plain = format!("{base}'v'");
        let literal = format!("{base}'v {} '' it''s'", kws.join(" "));
        let commented = format!("{base}'v' -- {}\n", kws.join(" "));
        let quoted = format!("{base}\"{}\"", kws.join(" "));
        let reference = component_counts(&tokenize_sql(&plain).unwrap(), CountMode::Presence);
        for variant in [literal, commented, quoted] {
            let counts = component_counts(&tokenize_sql(&variant).unwrap(), CountMode::Presence);
            prop_assert_eq!(counts, reference, "{}", variant);
        }
    }

    #[test]
    fn classification_is_deterministic(sql in "[A-Za-z ()*=',]{1,60}") {
        if let Ok(first) = classify_sql(&sql, CountMode::Presence) {
            prop_assert_eq!(classify_sql(&sql, CountMode::Presence).unwrap(), first);
        }
    }
}
