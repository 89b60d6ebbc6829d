//! Interior and exterior barrier pieces, their patching, and numeric
//! certification of the super/subsolution, ordering and boundary properties.
//!
//! Interior: `λ±_int = -A + s (F(z) + Bτ + E) + τ s² D Q(z)` with `s = e^{-2γτ}`.
//! Exterior: `λ±_ext = -c λ̄(φ) + b s ψ(φ)`.
//! The plus barrier takes the pointwise minimum of the two pieces on the
//! overlap `R_* ≤ z ≤ R^*`, the minus barrier the maximum.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecPolicy};
use crate::formal::{formal_exterior, formal_interior, Picture};
use crate::operators::{f_phi_scaled, t_z_scaled, PhiCandidate, PhiJet, ZCandidate, ZJet};
use crate::params::{derive_constants_with, soliton_for, validate, DerivedConstants, FlowParams};
use crate::profiles::{lambda_bar_drop, lambda_bar_jet, psi_jet, solve_q, FProfile, Jet, ProfileSolution, QProfile};

/// Exterior residual checks stop this far inside the cylinder radius.
pub const EXTERIOR_GAP: f64 = 1e-3;
/// Maximum number of b-tightening rounds.
pub const MAX_TIGHTEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    /// `+1` for the supersolution, `-1` for the subsolution.
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InteriorPiece {
    pub side: Side,
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub d: f64,
    pub gamma: f64,
    pub n: u32,
    pub f: FProfile,
    pub q: QProfile,
}

impl InteriorPiece {
    pub fn value(&self, z: f64, tau: f64) -> f64 {
        let s = (-2.0 * self.gamma * tau).exp();
        -self.a + s * self.lift(z, tau)
    }

    /// `e^{2γτ}(λ + A)`.
    pub fn lift(&self, z: f64, tau: f64) -> f64 {
        let s = (-2.0 * self.gamma * tau).exp();
        self.f.value(z) + self.b * tau + self.e + tau * s * self.d * self.q.value(z)
    }

    /// `∂_φ λ` at `φ = z e^{-γτ}`.
    pub fn phi_slope(&self, z: f64, tau: f64) -> f64 {
        let s = (-2.0 * self.gamma * tau).exp();
        (self.gamma * tau).exp() * s * (self.f.deriv(z) + tau * s * self.d * self.q.deriv(z))
    }

    /// Scaled residual `e^{2γτ} T_z`.
    pub fn residual(&self, z: f64, tau: f64) -> Result<f64> {
        t_z_scaled(&self.z_jet(z, tau), z, tau, self.gamma, self.n)
    }
}

impl ZCandidate for InteriorPiece {
    fn z_jet(&self, z: f64, tau: f64) -> ZJet {
        let s = (-2.0 * self.gamma * tau).exp();
        let k = tau * s * self.d;
        let q = Jet { v: self.q.value(z), d1: self.q.deriv(z), d2: self.q.second(z) };
        ZJet {
            a: self.a,
            profile: Some(Jet { v: self.f.value(z), d1: self.f.deriv(z), d2: self.f.second(z) }),
            eta: Jet { v: self.b * tau + self.e + k * q.v, d1: k * q.d1, d2: k * q.d2 },
            phi_tau: self.b + self.d * q.v * s * (1.0 - 2.0 * self.gamma * tau),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExteriorPiece {
    pub side: Side,
    pub c: f64,
    pub b: f64,
    pub c1_psi: f64,
    pub gamma: f64,
    pub n: u32,
}

impl ExteriorPiece {
    fn cyl2(&self) -> f64 {
        2.0 * (self.n as f64 - 1.0)
    }

    /// Value; extended by its limit 0 at and beyond the cylinder radius.
    pub fn value(&self, phi: f64, tau: f64) -> f64 {
        let phi = phi.abs();
        if phi * phi >= self.cyl2() {
            return 0.0;
        }
        let s = (-2.0 * self.gamma * tau).exp();
        let lb = lambda_bar_jet(self.n, self.gamma, phi).map(|j| j.v).unwrap_or(0.0);
        let psi = if phi == 0.0 { f64::INFINITY } else { psi_jet(self.n, self.gamma, self.c1_psi, phi).map(|j| j.v).unwrap_or(0.0) };
        -self.c * lb + self.b * s * psi
    }

    /// `e^{2γτ}(λ + A)`, with `A - cλ̄` taken without cancellation.
    pub fn lift(&self, phi: f64, tau: f64) -> f64 {
        let s = (-2.0 * self.gamma * tau).exp();
        let psi = psi_jet(self.n, self.gamma, self.c1_psi, phi.abs()).map(|j| j.v).unwrap_or(f64::NAN);
        lambda_bar_drop(self.n, self.gamma, self.c, phi) / s + self.b * psi
    }

    pub fn phi_slope(&self, phi: f64, tau: f64) -> f64 {
        let s = (-2.0 * self.gamma * tau).exp();
        let lb = lambda_bar_jet(self.n, self.gamma, phi).map(|j| j.d1).unwrap_or(f64::NAN);
        let ps = psi_jet(self.n, self.gamma, self.c1_psi, phi).map(|j| j.d1).unwrap_or(f64::NAN);
        -self.c * lb + self.b * s * ps
    }

    /// Scaled residual `e^{2γτ} F_φ`.
    pub fn residual(&self, phi: f64, tau: f64) -> Result<f64> {
        f_phi_scaled(&self.try_jet(phi, tau)?, phi, tau, self.gamma, self.n)
    }

    fn try_jet(&self, phi: f64, tau: f64) -> Result<PhiJet> {
        let s = (-2.0 * self.gamma * tau).exp();
        let lb = lambda_bar_jet(self.n, self.gamma, phi)?;
        let ps = psi_jet(self.n, self.gamma, self.c1_psi, phi)?;
        Ok(PhiJet {
            stationary: Some(Jet { v: -self.c * lb.v, d1: -self.c * lb.d1, d2: -self.c * lb.d2 }),
            pert: Jet { v: self.b * s * ps.v, d1: self.b * s * ps.d1, d2: self.b * s * ps.d2 },
            pert_tau: -2.0 * self.gamma * self.b * s * ps.v,
        })
    }
}

impl PhiCandidate for ExteriorPiece {
    fn phi_jet(&self, phi: f64, tau: f64) -> PhiJet {
        self.try_jet(phi, tau).unwrap_or(PhiJet {
            stationary: None,
            pert: Jet { v: f64::NAN, d1: f64::NAN, d2: f64::NAN },
            pert_tau: f64::NAN,
        })
    }
}

fn side_values(p: &FlowParams, d: &DerivedConstants, side: Side) -> (f64, f64, f64, f64, f64, f64) {
    match side {
        Side::Plus => (d.a_plus, d.b_cap_plus, p.e_plus, d.d_plus, p.c_plus, p.b_plus),
        Side::Minus => (d.a_minus, d.b_cap_minus, p.e_minus, d.d_minus, p.c_minus, p.b_minus),
    }
}

pub fn make_interior_piece(
    p: &FlowParams,
    d: &DerivedConstants,
    soliton: &Arc<ProfileSolution>,
    side: Side,
    tol: f64,
) -> Result<InteriorPiece> {
    let (a, b, e, dd, _, _) = side_values(p, d, side);
    let f = FProfile::new(a, p.gamma, soliton.clone());
    let q = solve_q(&f, 1.05 * p.r1, tol)?;
    Ok(InteriorPiece { side, a, b, e, d: dd, gamma: p.gamma, n: p.n, f, q })
}

pub fn make_exterior_piece(p: &FlowParams, side: Side) -> ExteriorPiece {
    let (c, b) = match side {
        Side::Plus => (p.c_plus, p.b_plus),
        Side::Minus => (p.c_minus, p.b_minus),
    };
    ExteriorPiece { side, c, b, c1_psi: 0.0, gamma: p.gamma, n: p.n }
}

/// `e^{2γτ}(λ_int - λ_ext)` at `z`, `φ = z e^{-γτ}`.
pub fn crossing_function(int: &InteriorPiece, ext: &ExteriorPiece, z: f64, tau: f64) -> f64 {
    let phi = z * (-int.gamma * tau).exp();
    int.lift(z, tau) - ext.lift(phi, tau)
}

/// Limit of the crossing function as `τ → ∞` at fixed `z`, with `E = 0`.
pub fn crossing_limit(int: &InteriorPiece, ext: &ExteriorPiece, z: f64) -> f64 {
    let g = int.gamma;
    let s0 = 2.0 * (int.n as f64 - 1.0);
    let k = g - 0.5;
    let m = 3.0 * g - 0.5;
    let alpha = (2.0 * g + 1.0) / (2.0 * g - 1.0);
    let beta = 1.0 / (s0 * (2.0 * g - 1.0));
    let psi_lim = alpha * s0.powf(m - 1.0) + beta * s0.powf(m) * (ext.c1_psi + 2.0 * z.ln() - s0.ln());
    int.f.value(z) - int.a * k * z * z / s0 - ext.b * psi_lim
}

/// Outcome of the patch-radius search.
#[derive(Clone, Debug, Serialize)]
pub struct PatchRadii {
    pub r_lower: f64,
    pub r_upper: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    /// Smallest scanned τ from which the four patch inequalities hold over the window.
    pub tau: f64,
}

/// Scan over candidate initial times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TauScan {
    pub first: f64,
    pub ratio: f64,
    pub max: f64,
    /// Every candidate must pass on `[τ, τ + span]`.
    pub span: f64,
    pub step: f64,
}

impl Default for TauScan {
    fn default() -> Self {
        TauScan { first: 1.0, ratio: 1.1, max: 60.0, span: 8.0, step: 0.5 }
    }
}

/// Worst signed margin of one check; a check passes when `margin >= 0`
/// (or `> 0` when strict).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Margin {
    pub margin: f64,
    pub x: f64,
    pub tau: f64,
}

impl Margin {
    fn best() -> Self {
        Margin { margin: f64::INFINITY, x: f64::NAN, tau: f64::NAN }
    }

    fn worse(self, o: Margin) -> Margin {
        if o.margin < self.margin || o.margin.is_nan() {
            o
        } else {
            self
        }
    }

    pub fn ok(&self, strict: bool) -> bool {
        if strict {
            self.margin > 0.0
        } else {
            self.margin >= 0.0
        }
    }
}

fn worst_of(xs: &[f64], vals: Vec<f64>, tau: f64) -> Margin {
    xs.iter()
        .zip(vals)
        .fold(Margin::best(), |m, (&x, v)| m.worse(Margin { margin: if v.is_nan() { f64::NEG_INFINITY } else { v }, x, tau }))
}

fn scan_tau(scan: &TauScan, strict: bool, what: &str, f: impl Fn(f64) -> Margin) -> Result<(f64, Margin)> {
    let mut t = scan.first;
    let mut last_bad = Margin::best();
    while t <= scan.max {
        let steps = (scan.span / scan.step).round() as usize;
        let mut worst = Margin::best();
        let mut failed = None;
        for j in 0..=steps {
            let tp = t + j as f64 * scan.step;
            let m = f(tp);
            worst = worst.worse(m);
            if !m.ok(strict) {
                failed = Some(tp);
                last_bad = m;
                break;
            }
        }
        match failed {
            None => return Ok((t, worst)),
            Some(tp) => {
                while t <= tp {
                    t *= scan.ratio;
                }
            }
        }
    }
    Err(Error::Barrier(format!(
        "{what}: no τ ≤ {} passes; worst margin {:.3e} at x = {:.4}, τ = {:.3}",
        scan.max, last_bad.margin, last_bad.x, last_bad.tau
    )))
}

pub fn uniform(a: f64, b: f64, m: usize) -> Vec<f64> {
    (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect()
}

/// Exterior sample: half geometric from `lo`, half uniform, merged.
pub fn exterior_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let half = m / 2;
    let mut v: Vec<f64> = (0..half).map(|i| lo * (hi / lo).powf(i as f64 / (half - 1) as f64)).collect();
    v.extend(uniform(lo, hi, m - half));
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

/// Patched-barrier sample on `[0, hi]`: half uniform in `z ∈ [0, z_hi]`, half uniform in `φ`.
pub fn patched_grid(tau: f64, gamma: f64, z_hi: f64, hi: f64, m: usize) -> Vec<f64> {
    let w = (-gamma * tau).exp();
    let half = m / 2;
    let mut v: Vec<f64> = uniform(0.0, (z_hi * w).min(hi), half);
    v.extend(uniform(0.0, hi, m - half));
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

pub fn interior_margin(piece: &InteriorPiece, grid: &[f64], tau: f64, policy: ExecPolicy) -> Margin {
    let sg = piece.side.sign();
    let vals = exec::map(policy, grid, |&z| piece.residual(z, tau).map(|r| sg * r).unwrap_or(f64::NEG_INFINITY));
    worst_of(grid, vals, tau)
}

pub fn exterior_margin(piece: &ExteriorPiece, r2: f64, m: usize, tau: f64, policy: ExecPolicy) -> Margin {
    let hi = (2.0 * (piece.n as f64 - 1.0)).sqrt() - EXTERIOR_GAP;
    let lo = r2 * (-piece.gamma * tau).exp();
    let grid = exterior_grid(lo, hi, m);
    let sg = piece.side.sign();
    let vals = exec::map(policy, &grid, |&phi| piece.residual(phi, tau).map(|r| sg * r).unwrap_or(f64::NEG_INFINITY));
    worst_of(&grid, vals, tau)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.signum() != fhi.signum()) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Places the crossing of `e^{2γτ}(λ_int - λ_ext)` at `√(R1 R2)` in the
/// `τ → ∞` limit by choosing `E`, then takes `R_*`, `R^*` symmetric about it
/// in `log z` and scans τ for the four patch inequalities.
pub fn find_patch_radii(
    p: &FlowParams,
    int: [&InteriorPiece; 2],
    ext: [&ExteriorPiece; 2],
    scan: &TauScan,
) -> Result<PatchRadii> {
    let zc = (p.r1 * p.r2).sqrt();
    let kappa = (p.r1 / p.r2).powf(0.25);
    let (r_lower, r_upper) = (zc / kappa, zc * kappa);
    let mut es = [0.0; 2];
    for k in 0..2 {
        let e = -crossing_limit(int[k], ext[k], zc);
        let sg = int[k].side.sign();
        let lo = sg * (crossing_limit(int[k], ext[k], r_lower) + e);
        let hi = sg * (crossing_limit(int[k], ext[k], r_upper) + e);
        if !(lo < 0.0 && hi > 0.0) {
            return Err(Error::Barrier(format!(
                "{:?}: crossing function lacks the sign change on [R_*, R^*] = [{r_lower:.4}, {r_upper:.4}] \
                 (limits {lo:.4e}, {hi:.4e}); |b| too small relative to c^3",
                int[k].side
            )));
        }
        es[k] = e;
    }
    let shifted: Vec<InteriorPiece> = (0..2).map(|k| InteriorPiece { e: es[k], ..int[k].clone() }).collect();
    let (tau, _) = scan_tau(scan, true, "patch inequalities", |tau| patch_margin(&shifted, ext, r_lower, r_upper, tau))?;
    Ok(PatchRadii { r_lower, r_upper, e_plus: es[0], e_minus: es[1], tau })
}

fn patch_margin(int: &[InteriorPiece], ext: [&ExteriorPiece; 2], r_lower: f64, r_upper: f64, tau: f64) -> Margin {
    let mut m = Margin::best();
    for k in 0..2 {
        let sg = int[k].side.sign();
        for (r, want) in [(r_lower, -1.0), (r_upper, 1.0)] {
            let g = crossing_function(&int[k], ext[k], r, tau);
            m = m.worse(Margin { margin: want * sg * g, x: r, tau });
        }
    }
    m
}

#[derive(Clone, Debug)]
pub struct PatchedBarrier {
    pub side: Side,
    pub interior: InteriorPiece,
    pub exterior: ExteriorPiece,
    pub r_lower: f64,
    pub r_upper: f64,
}

impl PatchedBarrier {
    pub fn eval(&self, phi: f64, tau: f64) -> f64 {
        eval_patched(self, phi, tau)
    }
}

pub fn eval_patched(b: &PatchedBarrier, phi: f64, tau: f64) -> f64 {
    let z = phi.abs() * (b.interior.gamma * tau).exp();
    if z <= b.r_lower {
        return b.interior.value(z, tau);
    }
    if z >= b.r_upper {
        return b.exterior.value(phi, tau);
    }
    let (i, e) = (b.interior.value(z, tau), b.exterior.value(phi, tau));
    match b.side {
        Side::Plus => i.min(e),
        Side::Minus => i.max(e),
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TauValues {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub tau4: f64,
    pub tau5: f64,
    pub tau0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierOptions {
    pub profile_tol: f64,
    pub grid_points: usize,
    pub scan: TauScan,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions { profile_tol: 1e-10, grid_points: 2000, scan: TauScan::default() }
    }
}

/// Both patched barriers together with the data they were built from.
#[derive(Clone, Debug)]
pub struct BarrierSet {
    /// Parameters after b-tightening and E placement.
    pub params: FlowParams,
    pub derived: DerivedConstants,
    pub soliton: Arc<ProfileSolution>,
    pub plus: PatchedBarrier,
    pub minus: PatchedBarrier,
    pub taus: TauValues,
    pub tighten_rounds: usize,
}

impl BarrierSet {
    pub fn tau0(&self) -> f64 {
        self.taus.tau0
    }
}

/// Builds, tightens and patches both barriers and fixes `τ₀`.
pub fn build_barriers(p: &FlowParams, opts: &BarrierOptions, policy: ExecPolicy) -> Result<BarrierSet> {
    validate(p).into_result()?;
    let soliton = soliton_for(p, opts.profile_tol)?;
    build_barriers_with(p, &soliton, opts, policy)
}

pub fn build_barriers_with(
    p: &FlowParams,
    soliton: &Arc<ProfileSolution>,
    opts: &BarrierOptions,
    policy: ExecPolicy,
) -> Result<BarrierSet> {
    let mut p = p.clone();
    let m = opts.grid_points;
    let mut rounds = 0;
    let tau2 = loop {
        let ext_p = make_exterior_piece(&p, Side::Plus);
        let ext_m = make_exterior_piece(&p, Side::Minus);
        let rp = scan_tau(&opts.scan, false, "exterior plus", |t| exterior_margin(&ext_p, p.r2, m, t, policy));
        let rm = scan_tau(&opts.scan, false, "exterior minus", |t| exterior_margin(&ext_m, p.r2, m, t, policy));
        match (rp, rm) {
            (Ok((a, _)), Ok((b, _))) => break a.max(b),
            (rp, rm) => {
                if rounds == MAX_TIGHTEN {
                    let e = rp.err().or(rm.err()).unwrap();
                    return Err(Error::Barrier(format!("after {MAX_TIGHTEN} tightening rounds: {e}")));
                }
                if rp.is_err() {
                    p.b_plus *= 2.0;
                }
                if rm.is_err() {
                    p.b_minus *= 0.5;
                }
                rounds += 1;
            }
        }
    };
    let derived = derive_constants_with(&p, soliton)?;
    let tol = opts.profile_tol;
    let int_p = make_interior_piece(&p, &derived, soliton, Side::Plus, tol)?;
    let int_m = make_interior_piece(&p, &derived, soliton, Side::Minus, tol)?;
    let ext_p = make_exterior_piece(&p, Side::Plus);
    let ext_m = make_exterior_piece(&p, Side::Minus);
    let radii = find_patch_radii(&p, [&int_p, &int_m], [&ext_p, &ext_m], &opts.scan)?;
    p.e_plus = radii.e_plus;
    p.e_minus = radii.e_minus;
    let int_p = InteriorPiece { e: radii.e_plus, ..int_p };
    let int_m = InteriorPiece { e: radii.e_minus, ..int_m };
    let zgrid = uniform(0.0, p.r1, m);
    let (t1p, _) = scan_tau(&opts.scan, false, "interior plus", |t| interior_margin(&int_p, &zgrid, t, policy))?;
    let (t1m, _) = scan_tau(&opts.scan, false, "interior minus", |t| interior_margin(&int_m, &zgrid, t, policy))?;
    let plus = PatchedBarrier { side: Side::Plus, interior: int_p, exterior: ext_p, r_lower: radii.r_lower, r_upper: radii.r_upper };
    let minus = PatchedBarrier { side: Side::Minus, interior: int_m, exterior: ext_m, r_lower: radii.r_lower, r_upper: radii.r_upper };
    let (tau3, _) = scan_tau(&opts.scan, true, "ordering", |t| ordering_margins(&plus, &minus, &p, m, t, policy).0)?;
    let (tau5, _) = scan_tau(&opts.scan, true, "formal sandwich", |t| sandwich_margin(&plus, &minus, &p, soliton, m, t, policy))?;
    let mut taus = TauValues { tau1: t1p.max(t1m), tau2, tau3, tau4: radii.tau, tau5, tau0: 0.0 };
    taus.tau0 = taus.tau1.max(taus.tau2).max(taus.tau3).max(taus.tau4).max(taus.tau5) + 1.0;
    if let Some(t) = p.tau0 {
        taus.tau0 = taus.tau0.max(t);
    }
    p.tau0 = Some(taus.tau0);
    Ok(BarrierSet { params: p, derived, soliton: soliton.clone(), plus, minus, taus, tighten_rounds: rounds })
}

/// `(patched λ⁺ - λ⁻, interior ordering on [0,R1], exterior ordering)`.
fn ordering_margins(
    plus: &PatchedBarrier,
    minus: &PatchedBarrier,
    p: &FlowParams,
    m: usize,
    tau: f64,
    policy: ExecPolicy,
) -> (Margin, Margin, Margin) {
    let hi = p.cylinder_radius() - EXTERIOR_GAP;
    let grid = patched_grid(tau, p.gamma, p.r1, hi, m);
    let v = exec::map(policy, &grid, |&phi| plus.eval(phi, tau) - minus.eval(phi, tau));
    let patched = worst_of(&grid, v, tau);
    let zgrid = uniform(0.0, p.r1, m);
    let v = exec::map(policy, &zgrid, |&z| plus.interior.value(z, tau) - minus.interior.value(z, tau));
    let int = worst_of(&zgrid, v, tau);
    let egrid = exterior_grid(p.r2 * (-p.gamma * tau).exp(), hi, m);
    let v = exec::map(policy, &egrid, |&phi| plus.exterior.value(phi, tau) - minus.exterior.value(phi, tau));
    let ext = worst_of(&egrid, v, tau);
    (patched.worse(int).worse(ext), int, ext)
}

fn sandwich_margin(
    plus: &PatchedBarrier,
    minus: &PatchedBarrier,
    p: &FlowParams,
    soliton: &ProfileSolution,
    m: usize,
    tau: f64,
    policy: ExecPolicy,
) -> Margin {
    let zgrid = uniform(0.0, p.r1, m);
    let v = exec::map(policy, &zgrid, |&z| match formal_interior(Picture::Lambda, p, soliton, z, tau) {
        Ok(f) => (plus.interior.value(z, tau) - f).min(f - minus.interior.value(z, tau)),
        Err(_) => f64::NEG_INFINITY,
    });
    let int = worst_of(&zgrid, v, tau);
    let hi = p.cylinder_radius() - EXTERIOR_GAP;
    let egrid = exterior_grid(p.r2 * (-p.gamma * tau).exp(), hi, m);
    let v = exec::map(policy, &egrid, |&phi| match formal_exterior(Picture::Lambda, p, phi) {
        Ok(f) => (plus.exterior.value(phi, tau) - f).min(f - minus.exterior.value(phi, tau)),
        Err(_) => f64::NEG_INFINITY,
    });
    int.worse(worst_of(&egrid, v, tau))
}

#[derive(Clone, Debug, Serialize)]
pub struct CertItem {
    pub name: String,
    pub pass: bool,
    pub margin: Margin,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    pub items: Vec<CertItem>,
    pub taus: TauValues,
    pub r_lower: f64,
    pub r_upper: f64,
}

impl CertificateReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn item(&self, prefix: &str) -> Option<&CertItem> {
        self.items.iter().find(|i| i.name.starts_with(prefix))
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.taus;
        writeln!(
            f,
            "tau1 = {:.4}  tau2 = {:.4}  tau3 = {:.4}  tau4 = {:.4}  tau5 = {:.4}  tau0 = {:.4}",
            t.tau1, t.tau2, t.tau3, t.tau4, t.tau5, t.tau0
        )?;
        writeln!(f, "R_* = {:.6}  R^* = {:.6}", self.r_lower, self.r_upper)?;
        for i in &self.items {
            writeln!(
                f,
                "[{}] {:<34} margin {:>12.4e} at x = {:<10.5} tau = {:<8.3} {}",
                if i.pass { "PASS" } else { "FAIL" },
                i.name,
                i.margin.margin,
                i.margin.x,
                i.margin.tau,
                i.detail
            )?;
        }
        Ok(())
    }
}

fn window(t: f64, len: f64, step: f64) -> Vec<f64> {
    let k = (len / step).round() as usize;
    (0..=k).map(|j| t + j as f64 * step).collect()
}

fn over(times: &[f64], f: impl Fn(f64) -> Margin) -> Margin {
    times.iter().fold(Margin::best(), |m, &t| m.worse(f(t)))
}

fn item(name: &str, m: Margin, strict: bool, detail: impl Into<String>) -> CertItem {
    CertItem { name: name.to_string(), pass: m.ok(strict), margin: m, detail: detail.into() }
}

/// Checks every barrier property on windows of length `len` starting at the
/// certified times. Margins are signed so that `>= 0` means satisfied.
pub fn certify_barriers(set: &BarrierSet, grid_points: usize, len: f64, policy: ExecPolicy) -> CertificateReport {
    let p = &set.params;
    let t = &set.taus;
    let m = grid_points;
    let step = 0.5;
    let zgrid = uniform(0.0, p.r1, m);
    let mut items = Vec::new();

    let w1 = window(t.tau1, len, step);
    items.push(item("B1 interior plus: T_z >= 0", over(&w1, |s| interior_margin(&set.plus.interior, &zgrid, s, policy)), false, "z in [0,R1]"));
    items.push(item("B1 interior minus: T_z <= 0", over(&w1, |s| interior_margin(&set.minus.interior, &zgrid, s, policy)), false, "z in [0,R1]"));
    let w2 = window(t.tau2, len, step);
    items.push(item("B1 exterior plus: F_phi >= 0", over(&w2, |s| exterior_margin(&set.plus.exterior, p.r2, m, s, policy)), false, "phi in [R2 e^-gt, r-1e-3]"));
    items.push(item("B1 exterior minus: F_phi <= 0", over(&w2, |s| exterior_margin(&set.minus.exterior, p.r2, m, s, policy)), false, "phi in [R2 e^-gt, r-1e-3]"));

    let w3 = window(t.tau3, len, step);
    let ords: Vec<_> = w3.iter().map(|&s| ordering_margins(&set.plus, &set.minus, p, m, s, policy)).collect();
    let fold = |k: usize| {
        ords.iter().fold(Margin::best(), |a, o| a.worse(match k {
            0 => o.0,
            1 => o.1,
            _ => o.2,
        }))
    };
    items.push(item("B2 ordering lambda- < lambda+", fold(0), true, "patched, phi grid"));
    items.push(item("ordering interior pieces", fold(1), true, "z in [0,R1]"));
    items.push(item("ordering exterior pieces", fold(2), true, "phi in [R2 e^-gt, r-1e-3]"));

    let w4 = window(t.tau4, len, step);
    let ints = [set.plus.interior.clone(), set.minus.interior.clone()];
    let pm = over(&w4, |s| patch_margin(&ints, [&set.plus.exterior, &set.minus.exterior], set.plus.r_lower, set.plus.r_upper, s));
    items.push(item("patch inequalities at R_*, R^*", pm, true, format!("R_* = {:.4}, R^* = {:.4}", set.plus.r_lower, set.plus.r_upper)));

    let w0 = window(t.tau0, len, step);
    items.push(item("B3 exterior piece near cylinder", over(&w0, |s| structural_margin(set, s)), false, "patched == exterior for z >= R^*"));
    let (b4, b4_detail) = boundary_margin(set, t.tau0);
    items.push(item("B4 boundary limit", b4, false, b4_detail));
    items.push(item("corner orientation", over(&w0, |s| corner_margin(set, s)), true, "plus: left slope > right slope (inf); minus reversed"));
    let w5 = window(t.tau5, len, step);
    items.push(item("formal solution sandwich", over(&w5, |s| sandwich_margin(&set.plus, &set.minus, p, &set.soliton, m, s, policy)), true, "c in (c+, c-)"));

    CertificateReport { items, taus: t.clone(), r_lower: set.plus.r_lower, r_upper: set.plus.r_upper }
}

fn structural_margin(set: &BarrierSet, tau: f64) -> Margin {
    let g = set.params.gamma;
    let lo = set.plus.r_upper * (-g * tau).exp();
    let hi = set.params.cylinder_radius() - EXTERIOR_GAP;
    let mut m = Margin::best();
    for phi in uniform(lo, hi, 200) {
        for b in [&set.plus, &set.minus] {
            let d = (b.eval(phi, tau) - b.exterior.value(phi, tau)).abs();
            m = m.worse(Margin { margin: -d, x: phi, tau });
        }
    }
    m
}

/// `|λ±|` at `φ = r(1 - 10^{-k})`, `k = 3..14`: must decrease, ending below 1e-3.
fn boundary_margin(set: &BarrierSet, tau: f64) -> (Margin, String) {
    let r = set.params.cylinder_radius();
    let mut m = Margin::best();
    let mut last = 0.0;
    for b in [&set.plus, &set.minus] {
        let vals: Vec<(f64, f64)> = (3..=14).map(|k| {
            let phi = r * (1.0 - 10f64.powi(-k));
            (phi, b.eval(phi, tau).abs())
        }).collect();
        for w in vals.windows(2) {
            m = m.worse(Margin { margin: w[0].1 - w[1].1, x: w[1].0, tau });
        }
        let (phi, v) = *vals.last().unwrap();
        m = m.worse(Margin { margin: 1e-3 - v, x: phi, tau });
        last = f64::max(last, v);
    }
    (m, format!("max |lambda| at r(1-1e-14) = {last:.3e}"))
}

/// Slope jump at each crossing inside the overlap, signed so that `> 0`
/// matches the inf (plus) / sup (minus) rule.
fn corner_margin(set: &BarrierSet, tau: f64) -> Margin {
    let g = set.params.gamma;
    let w = (-g * tau).exp();
    let mut m = Margin::best();
    for b in [&set.plus, &set.minus] {
        let f = |z: f64| crossing_function(&b.interior, &b.exterior, z, tau);
        match bisect(f, b.r_lower, b.r_upper) {
            Some(z) => {
                let phi = z * w;
                let left = b.interior.phi_slope(z, tau);
                let right = b.exterior.phi_slope(phi, tau);
                m = m.worse(Margin { margin: b.side.sign() * (left - right), x: phi, tau });
            }
            None => m = m.worse(Margin { margin: f64::NEG_INFINITY, x: f64::NAN, tau }),
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pieces() -> (FlowParams, DerivedConstants, Arc<ProfileSolution>) {
        let p = FlowParams::baseline();
        let sol = soliton_for(&p, 1e-10).unwrap();
        let d = derive_constants_with(&p, &sol).unwrap();
        (p, d, sol)
    }

    #[test]
    fn interior_value_at_origin() {
        let (p, d, sol) = pieces();
        let ip = make_interior_piece(&p, &d, &sol, Side::Plus, 1e-10).unwrap();
        let ip = InteriorPiece { e: 0.7, ..ip };
        let tau = 3.0;
        let s = (-2.0 * p.gamma * tau).exp();
        let want = -ip.a + s * (ip.b * tau + 0.7);
        assert!((ip.value(0.0, tau) - want).abs() < 1e-15);
        assert!((ip.value(5.0, 40.0) + ip.a).abs() < 1e-12);
    }

    #[test]
    fn exterior_vanishes_at_cylinder() {
        let p = FlowParams::baseline();
        for side in [Side::Plus, Side::Minus] {
            let e = make_exterior_piece(&p, side);
            let r = p.cylinder_radius();
            assert!(e.value(r * (1.0 - 1e-10), 5.0).abs() < 1e-4);
            assert_eq!(e.value(r, 5.0), 0.0);
        }
        assert!(make_exterior_piece(&p, Side::Minus).b > 0.0);
    }

    #[test]
    fn crossing_signs_at_ends() {
        let (p, d, sol) = pieces();
        let ip = make_interior_piece(&p, &d, &sol, Side::Plus, 1e-10).unwrap();
        let ep = make_exterior_piece(&p, Side::Plus);
        let tau = 12.0;
        assert!(crossing_function(&ip, &ep, 1e-8, tau) < 0.0);
        assert!(crossing_function(&ip, &ep, 1e-12, tau) < crossing_function(&ip, &ep, 1e-8, tau));
        let g_big = crossing_limit(&ip, &ep, 1e6);
        assert!(g_big > crossing_limit(&ip, &ep, 1e3) && g_big > 0.0);
    }

    #[test]
    fn patched_rules() {
        let p = FlowParams::baseline();
        let set = build_barriers(&p, &BarrierOptions { grid_points: 400, ..Default::default() }, ExecPolicy::Sequential).unwrap();
        let tau = set.tau0();
        let b = &set.plus;
        assert_eq!(b.eval(0.0, tau), b.interior.value(0.0, tau));
        let phi = 1.3;
        assert_eq!(b.eval(phi, tau), b.exterior.value(phi, tau));
        let zc = (b.r_lower * b.r_upper).sqrt();
        let phi = zc * (-p.gamma * tau).exp();
        let v = b.eval(phi, tau);
        assert!(v <= b.interior.value(zc, tau) && v <= b.exterior.value(phi, tau));
        assert!(p.r2 < b.r_lower && b.r_lower < b.r_upper && b.r_upper < p.r1);
    }
}
