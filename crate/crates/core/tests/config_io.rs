use proptest::prelude::*;
use tipflow::config::Config;
use tipflow::io::Table;

fn any_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
        Just(f64::INFINITY),
        Just(f64::NEG_INFINITY),
    ]
}

proptest! {
    #[test]
    fn table_round_trips_bit_for_bit(rows in prop::collection::vec(prop::collection::vec(any_float(), 3), 0..20)) {
        let mut t = Table::new(&[("tau", "1"), ("sup_h", "1/length"), ("x", "")]);
        for r in rows {
            t.push(r);
        }
        let back = Table::parse(&t.to_csv().unwrap()).unwrap();
        prop_assert_eq!(&back.columns, &t.columns);
        let bits = |t: &Table| t.rows.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&t));
    }

    #[test]
    fn config_round_trips(n in 1u32..6, gamma in 0.51..3.0f64, c in prop::option::of(0.01..2.0f64), len in 0.1..40.0f64, seed in 0..=i64::MAX as u64, ints in 4usize..5000) {
        let mut cfg = Config::default();
        cfg.params.n = n;
        cfg.params.gamma = gamma;
        cfg.params.c_plus = c;
        cfg.run.tau_len = len;
        cfg.run.seed = seed;
        cfg.solver.intervals = ints;
        let back = Config::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn seed_beyond_toml_integers_is_rejected() {
    let mut cfg = Config::default();
    cfg.run.seed = i64::MAX as u64 + 1;
    assert!(cfg.to_toml().is_err());
}

#[test]
fn partial_config_takes_baseline_values() {
    let cfg = Config::from_toml("[params]\ngamma = 1.5\n").unwrap();
    let mut expect = Config::default();
    expect.params.gamma = 1.5;
    assert_eq!(cfg, expect);
    assert!(Config::from_toml("[params]\ngama = 1.5\n").is_err());
}

#[test]
fn table_rejects_ragged_rows() {
    assert!(Table::parse("# a[1],b[1]\n1,2\n3\n").is_err());
    assert!(Table::parse("a,b\n1,2\n").is_err());
}
