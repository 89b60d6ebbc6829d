//! Problem constants and the relations tying them together.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{solve_grim_reaper_profile, FProfile, ProfileSolution};

/// Relative spread of the exterior amplitudes around `c_mid`.
pub const C_SPREAD: f64 = 0.2;
/// Safety factor applied beyond the strict inequality for `D`.
pub const D_MARGIN: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub n: u32,
    pub gamma: f64,
    pub a_tilde: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub c_mid: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub b_plus: f64,
    pub b_minus: f64,
    /// Interior radius, z-units.
    pub r1: f64,
    /// Exterior radius, z-units.
    pub r2: f64,
    /// Lower bound on the initial time; the certified value wins if larger.
    pub tau0: Option<f64>,
    /// Coefficients of the polynomial `C(τ) = Σ c_k τ^k`.
    pub c_of_tau: Vec<f64>,
}

pub const DEFAULT_R1: f64 = 40.0;
pub const DEFAULT_R2: f64 = 12.0;

/// `c` for which `A = c (2n-2)^{γ-1/2}` equals `1/Ã`.
pub fn matched_c(n: u32, gamma: f64, a_tilde: f64) -> f64 {
    (2.0 * (n as f64 - 1.0)).powf(0.5 - gamma) / a_tilde
}

impl FlowParams {
    /// The reference configuration used by the acceptance runs.
    pub fn baseline() -> Self {
        Self::for_gamma(2, 1.0)
    }

    /// Baseline construction for arbitrary `n`, `γ` with `Ã = 1`.
    pub fn for_gamma(n: u32, gamma: f64) -> Self {
        Self::matched(n, gamma, 1.0)
    }

    pub fn matched(n: u32, gamma: f64, a_tilde: f64) -> Self {
        let c_mid = matched_c(n, gamma, a_tilde);
        let c_plus = c_mid * (1.0 - C_SPREAD);
        let c_minus = c_mid * (1.0 + C_SPREAD);
        FlowParams {
            n,
            gamma,
            a_tilde,
            c_plus,
            c_minus,
            c_mid,
            e_plus: 0.0,
            e_minus: 0.0,
            b_plus: -2.5 * c_plus.powi(3),
            b_minus: 0.4 * c_minus.powi(3),
            r1: DEFAULT_R1,
            r2: DEFAULT_R2,
            tau0: None,
            c_of_tau: Vec::new(),
        }
    }

    pub fn c_of(&self, tau: f64) -> f64 {
        self.c_of_tau.iter().rev().fold(0.0, |acc, c| acc * tau + c)
    }

    pub fn cylinder_radius(&self) -> f64 {
        (2.0 * (self.n as f64 - 1.0)).sqrt()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidParams(self.violations.join("; ")))
        }
    }
}

pub fn validate(p: &FlowParams) -> ValidationReport {
    let mut v = Vec::new();
    let finite = [
        p.gamma, p.a_tilde, p.c_plus, p.c_minus, p.c_mid, p.e_plus, p.e_minus, p.b_plus, p.b_minus, p.r1, p.r2,
    ]
    .iter()
    .all(|x| x.is_finite());
    if !finite {
        v.push("all parameters must be finite".to_string());
    }
    if p.n < 2 {
        v.push(format!("n must be at least 2 for flow operations (got {})", p.n));
    }
    if !(p.gamma > 0.5) {
        v.push(format!("gamma must exceed 1/2 (got {})", p.gamma));
    }
    if !(p.a_tilde > 0.0) {
        v.push(format!("A_tilde must be positive (got {})", p.a_tilde));
    }
    if !(p.c_plus > 0.0 && p.c_minus > 0.0 && p.c_mid > 0.0) {
        v.push("amplitudes c_plus, c_mid, c_minus must be positive".to_string());
    }
    if !(p.c_plus < p.c_minus) {
        v.push(format!("ordering violation: c_plus = {} must be below c_minus = {}", p.c_plus, p.c_minus));
    }
    if !(p.c_plus < p.c_mid && p.c_mid < p.c_minus) {
        v.push(format!(
            "ordering violation: c_mid = {} must lie strictly between c_plus and c_minus",
            p.c_mid
        ));
    }
    if p.n >= 2 && p.gamma > 0.5 && p.a_tilde > 0.0 {
        let c = matched_c(p.n, p.gamma, p.a_tilde);
        if ((p.c_mid - c) / c).abs() > 1e-12 {
            v.push(format!("c_mid = {} inconsistent with A_tilde (expected {c})", p.c_mid));
        }
    }
    if !(p.b_plus < 0.0) {
        v.push(format!("b_plus must be negative (got {})", p.b_plus));
    }
    if !(p.b_minus > 0.0) {
        v.push(format!("b_minus must be positive (got {})", p.b_minus));
    }
    if !(p.r2 > 0.0 && p.r2 < p.r1) {
        v.push(format!("radii must satisfy 0 < R2 < R1 (got R2 = {}, R1 = {})", p.r2, p.r1));
    }
    if let Some(t) = p.tau0 {
        if !(t.is_finite() && t > 0.0) {
            v.push(format!("tau0 must be positive (got {t})"));
        }
    }
    ValidationReport { violations: v }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub beta_tilde: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub a_mid: f64,
    pub b_cap_plus: f64,
    pub b_cap_minus: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    /// Interior bound constant C(R1) for each side.
    pub c_bound_plus: f64,
    pub c_bound_minus: f64,
    pub cylinder_radius: f64,
}

/// Closed-form part of the relations (everything except `D`).
pub fn amplitude(n: u32, gamma: f64, c: f64) -> f64 {
    c * (2.0 * (n as f64 - 1.0)).powf(gamma - 0.5)
}

pub fn beta_tilde(n: u32, gamma: f64) -> f64 {
    (2.0 * (n as f64 - 1.0)).powf(3.0 * (gamma - 0.5)) / (2.0 * gamma - 1.0)
}

pub fn b_cap(n: u32, gamma: f64, b: f64) -> f64 {
    -2.0 * gamma * b * beta_tilde(n, gamma)
}

/// Soliton profile tabulated far enough for every `F` used with these params.
pub fn soliton_for(p: &FlowParams, tol: f64) -> Result<Arc<ProfileSolution>> {
    let a_min = amplitude(p.n, p.gamma, p.c_plus);
    let zbar = (p.r1 * (p.gamma - 0.5) / a_min).max(10.0) * 1.05;
    Ok(Arc::new(solve_grim_reaper_profile(p.n, zbar, tol)?))
}

/// `max_{[0,R1]} max(|F|, |2 F''/(A g)|)` on a fine sample.
pub fn interior_bound(f: &FProfile, r1: f64) -> f64 {
    let a4 = f.a.powi(4);
    let m = 4000;
    (0..=m)
        .map(|i| {
            let z = r1 * i as f64 / m as f64;
            let d = f.deriv(z);
            let g = 1.0 + d * d / a4;
            f.value(z).abs().max((2.0 * f.second(z) / (f.a * g)).abs())
        })
        .fold(0.0, f64::max)
}

/// Margin rule: `X = (3γ-1/2 + C) B`, then `D = X ± |X|/2` (away from zero).
///
/// For the minus side `B < 0`, so this `D` also satisfies `D < (3γ-1/2-C) B`.
pub fn d_by_margin(gamma: f64, c_bound: f64, b_cap: f64, plus: bool) -> f64 {
    let x = (3.0 * gamma - 0.5 + c_bound) * b_cap;
    let slack = (D_MARGIN - 1.0) * x.abs();
    if plus {
        x + slack
    } else {
        x - slack
    }
}

pub fn derive_constants(p: &FlowParams) -> Result<DerivedConstants> {
    validate(p).into_result()?;
    let pp = soliton_for(p, 1e-10)?;
    derive_constants_with(p, &pp)
}

pub fn derive_constants_with(p: &FlowParams, soliton: &Arc<ProfileSolution>) -> Result<DerivedConstants> {
    validate(p).into_result()?;
    let a_plus = amplitude(p.n, p.gamma, p.c_plus);
    let a_minus = amplitude(p.n, p.gamma, p.c_minus);
    let a_mid = amplitude(p.n, p.gamma, p.c_mid);
    let bp = b_cap(p.n, p.gamma, p.b_plus);
    let bm = b_cap(p.n, p.gamma, p.b_minus);
    let cb_plus = interior_bound(&FProfile::new(a_plus, p.gamma, soliton.clone()), p.r1);
    let cb_minus = interior_bound(&FProfile::new(a_minus, p.gamma, soliton.clone()), p.r1);
    Ok(DerivedConstants {
        beta_tilde: beta_tilde(p.n, p.gamma),
        a_plus,
        a_minus,
        a_mid,
        b_cap_plus: bp,
        b_cap_minus: bm,
        d_plus: d_by_margin(p.gamma, cb_plus, bp, true),
        d_minus: d_by_margin(p.gamma, cb_minus, bm, false),
        c_bound_plus: cb_plus,
        c_bound_minus: cb_minus,
        cylinder_radius: p.cylinder_radius(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_and_b_examples() {
        assert!((beta_tilde(2, 1.0) - 2f64.powf(1.5)).abs() < 1e-14);
        assert!((amplitude(2, 1.0, 1.0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(beta_tilde(3, 1.5), 32.0);
        assert_eq!(b_cap(3, 1.5, -1.0), 96.0);
    }

    #[test]
    fn validation_messages() {
        let mut p = FlowParams::baseline();
        assert!(validate(&p).is_ok());
        p.gamma = 0.4;
        assert!(validate(&p).violations.iter().any(|v| v.contains("gamma must exceed 1/2")));
        let mut p = FlowParams::baseline();
        p.c_plus = 2.0;
        p.c_minus = 1.0;
        assert!(validate(&p).violations.iter().any(|v| v.contains("ordering violation")));
    }

    #[test]
    fn baseline_amplitudes() {
        let p = FlowParams::baseline();
        let d = derive_constants(&p).unwrap();
        assert!((d.a_mid - 1.0).abs() < 1e-14);
        assert!(d.a_plus < d.a_mid && d.a_mid < d.a_minus);
        assert!(d.beta_tilde > 0.0);
        assert!(d.d_plus - (3.0 * p.gamma - 0.5 + d.c_bound_plus) * d.b_cap_plus > 0.0);
        assert!((3.0 * p.gamma - 0.5 - d.c_bound_minus) * d.b_cap_minus - d.d_minus > 0.0);
    }

    #[test]
    fn doubling_c_doubles_a() {
        let p = FlowParams::baseline();
        let mut q = p.clone();
        q.c_plus *= 2.0;
        assert!((amplitude(q.n, q.gamma, q.c_plus) - 2.0 * amplitude(p.n, p.gamma, p.c_plus)).abs() < 1e-14);
    }

    #[test]
    fn c_of_tau_polynomial() {
        let mut p = FlowParams::baseline();
        assert_eq!(p.c_of(3.0), 0.0);
        p.c_of_tau = vec![1.0, 2.0];
        assert_eq!(p.c_of(3.0), 7.0);
    }
}
