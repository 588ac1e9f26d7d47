use std::path::Path;

use normgen::table::{quantize, ResultRow, ResultsTable, COLUMNS};
use proptest::prelude::*;

fn row(kind: &str, x: f64, y: f64) -> ResultRow {
    ResultRow {
        sweep_kind: kind.into(),
        sweep_value: 0.05,
        seed: 0,
        epochs: 10,
        train_loss: 0.006,
        train_err: 0.0,
        test_loss: 0.4,
        test_err: 0.09,
        norm_kind: "fro".into(),
        norm_train_loss: x,
        norm_test_loss: y,
        norm_train_err: 0.0,
        norm_test_err: 0.09,
        product_norm: 342.5,
        selected_epoch: 9,
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1e-6..1e-6f64, Just(0.0), 1e-300..1e300f64]
}

prop_compose! {
    fn any_row()(kind in "[a-z_]{1,12}", vals in prop::collection::vec(finite(), 10),
                 seed in any::<u64>(), epochs in 0usize..100_000, sel in 0usize..100_000,
                 norm in prop_oneof![Just("fro"), Just("l1"), Just("linf")]) -> ResultRow {
        ResultRow {
            sweep_kind: kind, sweep_value: vals[0], seed, epochs,
            train_loss: vals[1], train_err: vals[2], test_loss: vals[3], test_err: vals[4],
            norm_kind: norm.into(), norm_train_loss: vals[5], norm_test_loss: vals[6],
            norm_train_err: vals[7], norm_test_err: vals[8], product_norm: vals[9], selected_epoch: sel,
        }
    }
}

proptest! {
    #[test]
    fn parse_inverts_emit(rows in prop::collection::vec(any_row(), 0..8)) {
        let mut t = ResultsTable::new();
        for r in rows {
            t.push(r).unwrap();
        }
        let text = t.to_csv();
        let back = ResultsTable::from_csv(&text, Path::new("t.csv")).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn quantize_keeps_nine_digits(v in finite()) {
        let q = quantize(v);
        prop_assert!((q - v).abs() <= 5e-9 * v.abs());
        prop_assert_eq!(quantize(q), q);
    }
}

#[test]
fn header_is_the_fixed_column_set() {
    let t = ResultsTable::new();
    assert_eq!(t.to_csv().trim_end(), COLUMNS.join(","));
    let bad = "sweep_kind,sweep_value\ninit_std,1\n";
    assert!(ResultsTable::from_csv(bad, Path::new("b.csv")).is_err());
}

#[test]
fn rmse_scale_differences_survive() {
    let mut t = ResultsTable::new();
    t.push(row("a", 2.30258509, 2.30259509)).unwrap();
    let back = ResultsTable::from_csv(&t.to_csv(), Path::new("t.csv")).unwrap();
    let r = &back.rows()[0];
    assert!(((r.norm_test_loss - r.norm_train_loss) - 1e-5).abs() < 1e-12);
}

#[test]
fn non_finite_rows_are_rejected() {
    let mut t = ResultsTable::new();
    assert!(t.push(row("a", f64::NAN, 1.0)).is_err());
    assert!(t.push(row("a", 1.0, f64::INFINITY)).is_err());
    assert!(t.push(row("a,b", 1.0, 1.0)).is_err());
    assert!(t.is_empty());
    let text = format!("{}\ninit_std,NaN,0,1,1,1,1,1,fro,1,1,1,1,1,1\n", COLUMNS.join(","));
    assert!(ResultsTable::from_csv(&text, Path::new("n.csv")).is_err());
}

#[test]
fn pairs_filter_by_kind() {
    let mut t = ResultsTable::new();
    t.push(row("init_std", 1.0, 2.0)).unwrap();
    t.push(row("random_labels", 3.0, 4.0)).unwrap();
    assert_eq!(t.pairs("norm_train_loss", "norm_test_loss", None).unwrap().len(), 2);
    let only = t.pairs("norm_train_loss", "norm_test_loss", Some(&["random_labels".into()])).unwrap();
    assert_eq!(only, vec![(3.0, 4.0)]);
    assert!(t.pairs("norm_kind", "test_loss", None).is_err());
}
