use proptest::prelude::*;
use softsql_core::{values_equal, ResultGrid, SqlValue};

fn value() -> impl Strategy<Value = SqlValue> {
    prop_oneof![
        Just(SqlValue::Null),
        any::<i64>().prop_map(SqlValue::Integer),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(SqlValue::Real),
        // Text that looks like the blob wire form is ambiguous; see `SqlValue::parse_blob_hex`.
        "[ -~é]{0,12}".prop_filter("not blob-like", |s| SqlValue::parse_blob_hex(s).is_none()).prop_map(SqlValue::Text),
        prop::collection::vec(any::<u8>(), 0..8).prop_map(SqlValue::Blob),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn json_round_trip_is_identity(v in value()) {
        let json = serde_json::to_string(&v).unwrap();
        let back: SqlValue = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &v);
        if let SqlValue::Real(r) = back {
            prop_assert_eq!(r.to_bits(), if let SqlValue::Real(o) = v { o.to_bits() } else { unreachable!() });
        }
    }

    #[test]
    fn equality_is_reflexive_and_symmetric(a in value(), b in value()) {
        prop_assert!(values_equal(&a, &a));
        prop_assert_eq!(values_equal(&a, &b), values_equal(&b, &a));
    }

    #[test]
    fn grid_round_trip(rows in prop::collection::vec(prop::collection::vec(value(), 3), 0..5)) {
        let g = ResultGrid::new(vec!["a".into(), "b".into(), "c".into()], rows).unwrap();
        let back: ResultGrid = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(back, g);
    }
}

#[test]
fn real_three_stays_real_through_json() {
    let back: SqlValue = serde_json::from_str(&serde_json::to_string(&SqlValue::Real(3.0)).unwrap()).unwrap();
    assert_eq!(back, SqlValue::Real(3.0));
}
