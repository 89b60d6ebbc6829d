use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use tipflow::barriers::{build_barriers, certify_barriers, BarrierOptions, BarrierSet};
use tipflow::exec::ExecPolicy;
use tipflow::params::FlowParams;
use tipflow::solver::{build_initial_data, run_grid, SolverOptions};
use tipflow::Error;

fn baseline() -> &'static BarrierSet {
    static S: OnceLock<BarrierSet> = OnceLock::new();
    S.get_or_init(|| build_barriers(&FlowParams::baseline(), &BarrierOptions::default(), ExecPolicy::Parallel).unwrap())
}

#[test]
fn policies_give_the_same_certificate() {
    let set = baseline();
    let seq = build_barriers(&FlowParams::baseline(), &BarrierOptions::default(), ExecPolicy::Sequential).unwrap();
    assert_eq!(seq.taus.tau0, set.taus.tau0);
    assert_eq!(seq.params, set.params);
    let a = certify_barriers(set, 400, 2.0, ExecPolicy::Parallel);
    let b = certify_barriers(&seq, 400, 2.0, ExecPolicy::Sequential);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert!(a.all_pass(), "{a}");
}

#[test]
fn patch_radii_sit_between_the_piece_radii() {
    let set = baseline();
    let p = &set.params;
    for b in [&set.plus, &set.minus] {
        assert!(p.r2 < b.r_lower && b.r_lower < b.r_upper && b.r_upper < p.r1, "{} {}", b.r_lower, b.r_upper);
    }
    let t = &set.taus;
    let tmax = [t.tau1, t.tau2, t.tau3, t.tau4, t.tau5].into_iter().fold(f64::MIN, f64::max);
    assert!(t.tau0 >= tmax);
}

#[test]
fn early_start_violates_smallness() {
    let set = baseline();
    let opts = SolverOptions { intervals: 300, ..SolverOptions::default() };
    let grid = run_grid(&set.params, &opts, 4.0).unwrap();
    match build_initial_data(set, Arc::clone(&grid), 2.0) {
        Err(Error::InitialData(msg)) => assert!(msg.contains("tau0"), "{msg}"),
        other => panic!("expected an initial-data error, got {:?}", other.map(|s| s.tau)),
    }
    let tau0 = set.tau0();
    let grid = run_grid(&set.params, &opts, tau0 + 1.0).unwrap();
    assert!(build_initial_data(set, grid, tau0).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn barriers_are_ordered(t in 0.0..0.995f64, dtau in 0.0..20.0f64) {
        let set = baseline();
        let phi = t * set.params.cylinder_radius();
        let tau = set.tau0() + dtau;
        let (lo, hi) = (set.minus.eval(phi, tau), set.plus.eval(phi, tau));
        prop_assert!(lo < hi, "phi = {phi}, tau = {tau}: {lo} >= {hi}");
        prop_assert!(hi < 0.0);
    }
}
