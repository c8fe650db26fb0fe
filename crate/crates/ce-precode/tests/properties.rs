use ce_precode::channel::{from_fixed_text, generate_channel, to_fixed_text};
use ce_precode::harness::{parse_csv, render_csv, Cell, RunRecord};
use ce_precode::precoder::canonicalize;
use proptest::prelude::*;
use std::f64::consts::PI;

proptest! {
    #[test]
    fn canonicalize_lands_in_range(theta in -1e6f64..1e6) {
        let t = canonicalize(theta);
        prop_assert!((-PI..PI).contains(&t));
        // Idempotent, and a representative of the same angle.
        prop_assert!((canonicalize(t) - t).abs() < 1e-12);
        let diff = (theta - t) / (2.0 * PI);
        prop_assert!((diff - diff.round()).abs() < 1e-6);
    }

    #[test]
    fn channel_text_round_trip(m in 1usize..4, n in 1usize..6, seed in 0u64..1000) {
        let chan = generate_channel(m, n.max(m), seed).unwrap();
        let text = to_fixed_text(&chan);
        let back = from_fixed_text(&text).unwrap();
        prop_assert_eq!(chan.entries(), back.entries());
    }

    #[test]
    fn csv_numeric_round_trip(values in proptest::collection::vec(-1e12f64..1e12, 1..8)) {
        let record = RunRecord {
            spec_hash: "h".into(),
            columns: (0..values.len()).map(|i| format!("c{i}")).collect(),
            rows: vec![values.iter().map(|&v| Cell::Num(v)).collect()],
            wall_time_seconds: 0.0,
        };
        let (_, rows) = parse_csv(&render_csv(&record)).unwrap();
        for (cell, &want) in rows[0].iter().zip(&values) {
            match cell {
                Cell::Num(got) => {
                    prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0))
                }
                other => prop_assert!(false, "expected number, got {:?}", other),
            }
        }
    }
}
