use proptest::prelude::*;
use tipflow::formal::{formal_exterior, formal_interior, Picture};
use tipflow::params::{soliton_for, FlowParams};
use tipflow::profiles::lambda_bar_jet;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The exterior formal solution is stationary for the transport part.
    #[test]
    fn exterior_formal_has_no_drift(n in 2u32..=5, gamma in 0.6..2.5f64, t in 0.05..0.95f64) {
        let p = FlowParams::for_gamma(n, gamma);
        let phi = t * p.cylinder_radius();
        let h = 1e-5;
        let f = |x: f64| formal_exterior(Picture::Lambda, &p, x).unwrap();
        let (l, lp) = (f(phi), (f(phi + h) - f(phi - h)) / (2.0 * h));
        let drift = ((n as f64 - 1.0) / phi - phi / 2.0) * lp + (gamma - 0.5) * l;
        prop_assert!(drift.abs() <= 1e-7 * (1.0 + l.abs() + lp.abs()), "drift {drift:e}");
    }

    /// Matched constants make the two exterior pictures reciprocal.
    #[test]
    fn exterior_pictures_are_reciprocal(n in 2u32..=5, gamma in 0.6..2.5f64, a_tilde in 0.5..2.0f64, t in 0.0..0.99f64) {
        let p = FlowParams::matched(n, gamma, a_tilde);
        let phi = t * p.cylinder_radius();
        let y = formal_exterior(Picture::Y, &p, phi).unwrap();
        let l = formal_exterior(Picture::Lambda, &p, phi).unwrap();
        prop_assert!((l * y + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn lambda_bar_jet_matches_differences(n in 2u32..=5, gamma in 0.6..2.5f64, t in 0.05..0.9f64) {
        let phi = t * (2.0 * (n as f64 - 1.0)).sqrt();
        let h = 1e-5;
        let j = lambda_bar_jet(n, gamma, phi).unwrap();
        let v = |x: f64| lambda_bar_jet(n, gamma, x).unwrap().v;
        let d1 = (v(phi + h) - v(phi - h)) / (2.0 * h);
        let d2 = (v(phi + h) - 2.0 * j.v + v(phi - h)) / (h * h);
        prop_assert!((j.d1 - d1).abs() <= 1e-7 * (1.0 + d1.abs()));
        prop_assert!((j.d2 - d2).abs() <= 1e-4 * (1.0 + d2.abs()));
    }
}

#[test]
fn interior_formal_is_even_with_tip_at_minus_a() {
    let p = FlowParams::for_gamma(3, 1.25);
    let prof = soliton_for(&p, 1e-10).unwrap();
    for &z in &[0.5, 3.0, 17.0] {
        for pic in [Picture::Y, Picture::Lambda] {
            let a = formal_interior(pic, &p, &prof, z, 4.0).unwrap();
            let b = formal_interior(pic, &p, &prof, -z, 4.0).unwrap();
            assert_eq!(a, b);
        }
    }
    let l0 = formal_interior(Picture::Lambda, &p, &prof, 0.0, 4.0).unwrap();
    assert!((l0 * p.a_tilde + 1.0).abs() < 1e-14);
}
