//! Method-of-lines evolution of `λ(φ, τ)` and of the physical inverse graph
//! `x(u, t)`.
//!
//! Unknowns live on a [`MappedGrid`] with an even ghost at the origin and
//! Dirichlet data at the last node. The state is stored split as
//! `(v_0, v_1 - v_0, …, v_{N-1} - v_0)`: near the tip the solution differs
//! from its tip value by `O(e^{-2γτ})`, far below the resolution of the
//! nodal values themselves. Right-hand sides are formed directly in split
//! form; the linear algebra of the Rosenbrock stages is done on the nodal
//! tridiagonal Jacobian.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{curvature_from_lambda, NodeCurvature};
use crate::barriers::BarrierSet;
use crate::error::{Error, Result};
use crate::exec::{self, ExecPolicy};
use crate::grid::{GridSpec, MappedGrid};
use crate::operators::{Coord, SampledFunction};
use crate::params::{amplitude, FlowParams};
use crate::profiles::{lambda_bar_drop, lambda_bar_jet};

/// Node-local flux of a semi-discrete system `v_t = D(u, p, q) + ℓ v`, with
/// tip law `v_t(0) = n q_0 + ℓ v_0`.
pub trait Mol: Sync {
    fn grid(&self) -> &MappedGrid;
    /// Coefficient `ℓ` of the zeroth-order term.
    fn ell(&self) -> f64;
    fn n_dim(&self) -> u32;
    /// Physical coordinate of node `i` is `scale(t) φ_i`.
    fn scale(&self, t: f64) -> f64;
    /// Dirichlet value at the last node.
    fn boundary(&self, t: f64) -> f64;
    /// `(D, ∂D/∂p, ∂D/∂q, ∂D/∂v)` at a node with coordinate `x > 0`.
    fn flux(&self, t: f64, x: f64, v: f64, p: f64, q: f64) -> [f64; 4];
    /// Whether `v` is admissible (e.g. `λ < 0`).
    fn admissible(&self, v: f64) -> bool;
}

/// Rescaled flow for `λ(φ, τ)`.
#[derive(Clone, Debug)]
pub struct RescaledMol {
    pub grid: Arc<MappedGrid>,
    pub n: u32,
    pub gamma: f64,
    pub boundary: f64,
    /// Test hook: drop the diffusion term, leaving the transport part.
    pub diffusion: bool,
}

impl Mol for RescaledMol {
    fn grid(&self) -> &MappedGrid {
        &self.grid
    }

    fn ell(&self) -> f64 {
        self.gamma - 0.5
    }

    fn n_dim(&self) -> u32 {
        self.n
    }

    fn scale(&self, _t: f64) -> f64 {
        1.0
    }

    fn boundary(&self, _t: f64) -> f64 {
        self.boundary
    }

    fn flux(&self, t: f64, phi: f64, l: f64, p: f64, q: f64) -> [f64; 4] {
        let v = (self.n as f64 - 1.0) / phi - phi / 2.0;
        if !self.diffusion {
            return [v * p, v, 0.0, 0.0];
        }
        let e = (2.0 * self.gamma * t).exp();
        let l2 = l * l;
        let l4 = l2 * l2;
        let den = 1.0 + e * p * p / l4;
        let num = q - 2.0 * p * p / l;
        let d = num / den + v * p;
        let dp = (-4.0 * p / l) / den - num * (2.0 * e * p / l4) / (den * den) + v;
        let dq = 1.0 / den;
        let dl = (2.0 * p * p / l2) / den + num * (4.0 * e * p * p / (l4 * l)) / (den * den);
        [d, dp, dq, dl]
    }

    fn admissible(&self, v: f64) -> bool {
        v < 0.0 && v.is_finite()
    }
}

/// Physical inverse-graph flow `x_t = x_uu/(1+x_u^2) + (n-1) x_u/u` on the
/// moving interval `u ∈ [0, φ_b √(T-t)]`, written in `ρ = u/√(T-t)` so the
/// nodes coincide with the rescaled grid.
#[derive(Clone, Debug)]
pub struct PhysicalMol {
    pub grid: Arc<MappedGrid>,
    pub n: u32,
    pub gamma: f64,
    /// Vanishing time of the enveloping cylinder.
    pub t_vanish: f64,
    /// Rescaled boundary value `y_b`; the physical boundary is `y_b (T-t)^{1/2-γ}`.
    pub y_b: f64,
}

impl Mol for PhysicalMol {
    fn grid(&self) -> &MappedGrid {
        &self.grid
    }

    fn ell(&self) -> f64 {
        0.0
    }

    fn n_dim(&self) -> u32 {
        self.n
    }

    fn scale(&self, t: f64) -> f64 {
        (self.t_vanish - t).sqrt()
    }

    fn boundary(&self, t: f64) -> f64 {
        self.y_b * (self.t_vanish - t).powf(0.5 - self.gamma)
    }

    fn flux(&self, t: f64, u: f64, _x: f64, p: f64, q: f64) -> [f64; 4] {
        let w = 1.0 + p * p;
        // node velocity du/dt at fixed ρ
        let drift = -u / (2.0 * (self.t_vanish - t));
        let k = (self.n as f64 - 1.0) / u + drift;
        [q / w + k * p, -2.0 * p * q / (w * w) + k, 1.0 / w, 0.0]
    }

    fn admissible(&self, v: f64) -> bool {
        v.is_finite()
    }
}

/// LU factors of a tridiagonal matrix (no pivoting).
#[derive(Clone, Debug, Default)]
pub struct Tridiag {
    lo: Vec<f64>,
    cp: Vec<f64>,
    beta: Vec<f64>,
}

impl Tridiag {
    pub fn factor(lo: &[f64], di: &[f64], up: &[f64]) -> Result<Self> {
        let m = di.len();
        let mut cp = vec![0.0; m];
        let mut beta = vec![0.0; m];
        for i in 0..m {
            beta[i] = if i == 0 { di[0] } else { di[i] - lo[i] * cp[i - 1] };
            if beta[i] == 0.0 || !beta[i].is_finite() {
                return Err(Error::Domain("singular tridiagonal system".into()));
            }
            if i + 1 < m {
                cp[i] = up[i] / beta[i];
            }
        }
        Ok(Tridiag { lo: lo.to_vec(), cp, beta })
    }

    pub fn solve(&self, rhs: &mut [f64]) {
        let m = rhs.len();
        rhs[0] /= self.beta[0];
        for i in 1..m {
            rhs[i] = (rhs[i] - self.lo[i] * rhs[i - 1]) / self.beta[i];
        }
        for i in (0..m - 1).rev() {
            rhs[i] -= self.cp[i] * rhs[i + 1];
        }
    }
}

/// Solves a tridiagonal system in place (`rhs` becomes the solution).
pub fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &mut [f64]) -> Result<()> {
    Tridiag::factor(lo, di, up)?.solve(rhs);
    Ok(())
}

/// Nodal derivatives at unknown node `i` from the split state.
fn node_pq<M: Mol + ?Sized>(m: &M, t: f64, y: &[f64], i: usize) -> (f64, f64, f64) {
    let g = m.grid();
    let nn = y.len();
    let sc = m.scale(t);
    if i == 0 {
        return (y[0], 0.0, g.tip_weight * y[1] / (sc * sc));
    }
    let wm = if i == 1 { 0.0 } else { y[i - 1] };
    let wi = y[i];
    let wp = if i + 1 < nn { y[i + 1] } else { m.boundary(t) - y[0] };
    let s = g.stencil(i);
    let p = s.a_p * (wp - wm) / sc;
    let q = (s.b_m * (wm - wi) + s.b_p * (wp - wi)) / (sc * sc);
    (y[0] + wi, p, q)
}

/// Split right-hand side: `out[0] = f_0`, `out[i] = f_i - f_0`.
pub fn split_rhs<M: Mol + ?Sized>(m: &M, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
    let nn = y.len();
    let n = m.n_dim() as f64;
    let ell = m.ell();
    let (_, _, q0) = node_pq(m, t, y, 0);
    if !m.admissible(y[0]) {
        return Err(Error::Domain(format!("inadmissible tip value {} at t = {t}", y[0])));
    }
    out[0] = n * q0 + ell * y[0];
    let sc = m.scale(t);
    for i in 1..nn {
        let (v, p, q) = node_pq(m, t, y, i);
        if !m.admissible(v) {
            return Err(Error::Domain(format!("inadmissible value {v} at node {i}, t = {t}")));
        }
        let x = sc * m.grid().phi[i];
        let [d, ..] = m.flux(t, x, v, p, q);
        out[i] = d + ell * y[i] - n * q0;
    }
    Ok(())
}

/// Nodal tridiagonal Jacobian `∂f_i/∂v_j`, plus `ds_i = Σ_j ∂f_i/∂v_j - ℓ`
/// evaluated without summing the large, cancelling stencil entries.
fn nodal_jacobian<M: Mol + ?Sized>(
    m: &M,
    t: f64,
    y: &[f64],
    lo: &mut [f64],
    di: &mut [f64],
    up: &mut [f64],
    ds: &mut [f64],
) {
    let nn = y.len();
    let n = m.n_dim() as f64;
    let ell = m.ell();
    let g = m.grid();
    let sc = m.scale(t);
    let tw = g.tip_weight / (sc * sc);
    lo[0] = 0.0;
    di[0] = -n * tw + ell;
    up[0] = n * tw;
    ds[0] = 0.0;
    for i in 1..nn {
        let (v, p, q) = node_pq(m, t, y, i);
        let x = sc * g.phi[i];
        let [_, dp, dq, dv] = m.flux(t, x, v, p, q);
        let s = g.stencil(i);
        lo[i] = dp * s.a_m / sc + dq * s.b_m / (sc * sc);
        di[i] = dq * s.b_0 / (sc * sc) + dv + ell;
        let right = dp * s.a_p / sc + dq * s.b_p / (sc * sc);
        if i + 1 < nn {
            up[i] = right;
            ds[i] = dv;
        } else {
            // the right neighbour is the Dirichlet node
            up[i] = 0.0;
            ds[i] = dv - right;
        }
    }
}

/// Stage matrix `I - γh J`.
///
/// Near the tip the split increments are many orders below the nodal ones
/// and the matrix rows are dominated by large entries that cancel on
/// constants. Elimination therefore carries the row surplus
/// `s_i = β_i - c_i` instead of the pivot, starting from the analytic row
/// sums, and back substitution produces neighbour differences directly.
struct StageSystem {
    a: Vec<f64>,
    s: Vec<f64>,
    beta: Vec<f64>,
}

impl StageSystem {
    fn new(lo: &[f64], up: &[f64], ds: &[f64], ell: f64, gh: f64) -> Result<Self> {
        let nn = lo.len();
        let alpha = 1.0 - gh * ell;
        let a: Vec<f64> = lo.iter().map(|v| gh * v).collect();
        let mut s = vec![0.0; nn];
        let mut beta = vec![0.0; nn];
        for i in 0..nn {
            let sigma = if i == 0 { alpha } else { alpha - gh * ds[i] };
            s[i] = if i == 0 { sigma } else { sigma + a[i] * s[i - 1] / beta[i - 1] };
            beta[i] = gh * up[i] + s[i];
            if beta[i] == 0.0 || !beta[i].is_finite() {
                return Err(Error::Domain("singular stage matrix".into()));
            }
        }
        Ok(StageSystem { a, s, beta })
    }

    /// Split right-hand side in, split solution out.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let nn = rhs.len();
        let mut m = vec![0.0; nn];
        m[0] = rhs[0];
        for i in 1..nn {
            m[i] = (rhs[i] + rhs[0]) + self.a[i] * m[i - 1] / self.beta[i - 1];
        }
        // d[i] = x_i - x_{i+1}
        let mut d = vec![0.0; nn];
        let mut x = m[nn - 1] / self.beta[nn - 1];
        for i in (0..nn - 1).rev() {
            d[i] = (m[i] - self.s[i] * x) / self.beta[i];
            x += d[i];
        }
        let mut k = vec![0.0; nn];
        let mut acc = 0.0;
        for i in 1..nn {
            acc -= d[i - 1];
            k[i] = acc;
        }
        k[0] = x;
        k
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    pub rtol: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Largest step of the opening linearly implicit Euler ladder
    /// (`h_start·10^-4, …, h_start`); zero skips it.
    pub h_start: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-6, h_min: 1e-14, h_max: 5e-3, h_start: 1e-10 }
    }
}

/// Two-stage L-stable Rosenbrock method with an embedded first-order estimate.
#[derive(Clone, Debug)]
pub struct Ros2 {
    pub ctrl: StepControl,
    pub h: f64,
    pub accepted: usize,
    pub rejected: usize,
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
    ds: Vec<f64>,
}

const GAMMA_R: f64 = 1.0 + std::f64::consts::FRAC_1_SQRT_2;

pub struct StepOutcome {
    pub y: Vec<f64>,
    /// Scaled error norm (accept iff `<= 1`).
    pub err: f64,
}

impl Ros2 {
    pub fn new(ctrl: StepControl, h: f64) -> Self {
        Ros2 { ctrl, h, accepted: 0, rejected: 0, lo: vec![], di: vec![], up: vec![], ds: vec![] }
    }

    /// One step of size `h` without acceptance logic.
    pub fn trial<M: Mol + ?Sized>(&mut self, m: &M, t: f64, y: &[f64], h: f64) -> Result<StepOutcome> {
        let nn = y.len();
        for v in [&mut self.lo, &mut self.di, &mut self.up, &mut self.ds] {
            v.resize(nn, 0.0);
        }
        nodal_jacobian(m, t, y, &mut self.lo, &mut self.di, &mut self.up, &mut self.ds);
        let gh = GAMMA_R * h;
        let sys = StageSystem::new(&self.lo, &self.up, &self.ds, m.ell(), gh)?;
        let mut f = vec![0.0; nn];
        split_rhs(m, t, y, &mut f)?;
        let dt = 1e-7 * (1.0 + t.abs());
        let mut f2 = vec![0.0; nn];
        split_rhs(m, t + dt, y, &mut f2)?;
        let ft: Vec<f64> = f2.iter().zip(&f).map(|(a, b)| (a - b) / dt).collect();
        let r1: Vec<f64> = f.iter().zip(&ft).map(|(a, b)| a + gh * b).collect();
        let k1 = sys.solve(&r1);
        let y1: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + h * k).collect();
        split_rhs(m, t + h, &y1, &mut f2)?;
        let r2: Vec<f64> = (0..nn).map(|i| f2[i] - 2.0 * k1[i] - gh * ft[i]).collect();
        let k2 = sys.solve(&r2);
        let ynew: Vec<f64> = (0..nn).map(|i| y[i] + 1.5 * h * k1[i] + 0.5 * h * k2[i]).collect();
        // filtered estimate: the stage matrix damps the stiff part of the raw difference
        let raw: Vec<f64> = (0..nn).map(|i| 0.5 * h * (k1[i] + k2[i])).collect();
        let est = sys.solve(&raw);
        let rtol = self.ctrl.rtol;
        let err = (0..nn)
            .map(|i| (est[i] / (rtol * y[i].abs().max(ynew[i].abs()) + 1e-300)).abs())
            .fold(0.0, f64::max);
        Ok(StepOutcome { y: ynew, err })
    }

    /// One linearly implicit Euler step. It is L-stable and first order, so
    /// a short ladder of tiny steps relaxes stiff initial layers (data that
    /// sits off the discrete quasi-static state at the tip) whose filtered
    /// Rosenbrock estimate would otherwise grow as the step shrinks.
    pub fn euler<M: Mol + ?Sized>(&mut self, m: &M, t: f64, y: &mut [f64], h: f64) -> Result<()> {
        let nn = y.len();
        for v in [&mut self.lo, &mut self.di, &mut self.up, &mut self.ds] {
            v.resize(nn, 0.0);
        }
        nodal_jacobian(m, t, y, &mut self.lo, &mut self.di, &mut self.up, &mut self.ds);
        let sys = StageSystem::new(&self.lo, &self.up, &self.ds, m.ell(), h)?;
        let mut f = vec![0.0; nn];
        split_rhs(m, t, y, &mut f)?;
        let k = sys.solve(&f);
        for (v, k) in y.iter_mut().zip(&k) {
            *v += h * k;
        }
        if !m.admissible(y[0]) {
            return Err(Error::Domain(format!("opening step left an inadmissible tip value {}", y[0])));
        }
        Ok(())
    }

    /// Advances by one accepted step no longer than `h_cap`; returns the step taken.
    pub fn step<M: Mol + ?Sized>(&mut self, m: &M, t: f64, y: &mut Vec<f64>, h_cap: f64) -> Result<f64> {
        if self.accepted == 0 && self.ctrl.h_start > 0.0 {
            let mut taken = 0.0;
            let mut h = self.ctrl.h_start * 1e-4;
            while h <= self.ctrl.h_start * 1.000001 && taken + h <= h_cap {
                self.euler(m, t + taken, y, h)?;
                taken += h;
                h *= 10.0;
            }
            if taken > 0.0 {
                self.accepted += 1;
                return Ok(taken);
            }
        }
        loop {
            let h = self.h.min(h_cap).min(self.ctrl.h_max);
            if h < self.ctrl.h_min {
                return Err(Error::StepUnderflow {
                    tau: t,
                    h,
                    detail: format!("after {} rejections; tip stiffness ~ {:.3e}", self.rejected, m.grid().tip_weight),
                });
            }
            match self.trial(m, t, y, h) {
                Ok(out) if out.err <= 1.0 && out.y.iter().all(|v| v.is_finite()) && m.admissible(out.y[0]) => {
                    *y = out.y;
                    self.accepted += 1;
                    let fac = if out.err > 0.0 { (0.9 / out.err.sqrt()).clamp(0.2, 5.0) } else { 5.0 };
                    if h >= self.h.min(self.ctrl.h_max) * 0.999 || fac < 1.0 {
                        self.h = h * fac;
                    }
                    return Ok(h);
                }
                Ok(out) => {
                    self.rejected += 1;
                    let fac = if out.err.is_finite() { (0.9 / out.err.sqrt()).clamp(0.2, 0.9) } else { 0.25 };
                    self.h = h * fac;
                }
                Err(Error::Domain(_)) => {
                    self.rejected += 1;
                    self.h = h * 0.25;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub intervals: usize,
    /// Distance of the truncation node from the cylinder radius.
    pub boundary_gap: f64,
    /// Tip scale of the grid as a fraction of `e^{-γ τ_end}`.
    pub tip_fraction: f64,
    pub boundary_weight: f64,
    pub control: StepControl,
    pub h0: f64,
    pub max_steps: usize,
    pub snapshot_every: f64,
    /// Record trapping margins every accepted step.
    pub track_trapping: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            intervals: 2000,
            boundary_gap: 1e-2,
            tip_fraction: 1e-2,
            boundary_weight: 1.0,
            control: StepControl::default(),
            h0: 1e-4,
            max_steps: 200_000,
            snapshot_every: 0.25,
            track_trapping: true,
        }
    }
}

/// Grid used for a run that ends at `tau_end`.
pub fn run_grid(p: &FlowParams, opts: &SolverOptions, tau_end: f64) -> Result<Arc<MappedGrid>> {
    let r = p.cylinder_radius();
    Ok(Arc::new(MappedGrid::new(GridSpec {
        intervals: opts.intervals,
        phi_b: r - opts.boundary_gap,
        cylinder: r,
        tip_scale: opts.tip_fraction * (-p.gamma * tau_end).exp(),
        boundary_weight: opts.boundary_weight,
    })?))
}

#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub grid: Arc<MappedGrid>,
    pub tau: f64,
    /// Split state: `y[0] = λ_0`, `y[i] = λ_i - λ_0`.
    pub y: Vec<f64>,
    pub boundary: f64,
}

impl EvolutionState {
    pub fn nodes(&self) -> usize {
        self.y.len() + 1
    }

    /// `λ_i - λ_0` including the boundary node.
    pub fn offset(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else if i < self.y.len() {
            self.y[i]
        } else {
            self.boundary - self.y[0]
        }
    }

    pub fn lambda(&self) -> Vec<f64> {
        (0..self.nodes()).map(|i| if i < self.y.len() { self.y[0] + self.offset(i) } else { self.boundary }).collect()
    }

    pub fn sampled(&self) -> SampledFunction {
        SampledFunction { coord: Coord::Phi, grid: self.grid.phi.clone(), values: self.lambda(), time: self.tau }
    }

    /// `(λ, λ_φ, λ_φφ)` at interior and tip nodes (boundary node excluded).
    ///
    /// These read the actual node positions and are exact for even
    /// quadratics, unlike the map-based stencils of the solver, whose tip and
    /// interior weights differ by `O(Δξ^2)` on such data. Curvatures near the
    /// tip vary far less than that, so comparisons between nodes need this.
    pub fn jets(&self) -> Vec<(f64, f64, f64)> {
        let phi = &self.grid.phi;
        let m = self.y.len();
        (0..m)
            .map(|i| {
                if i == 0 {
                    return (self.y[0], 0.0, 2.0 * self.offset(1) / (phi[1] * phi[1]));
                }
                let (hl, hr) = (phi[i] - phi[i - 1], phi[i + 1] - phi[i]);
                let s = hl + hr;
                let (dm, dp) = (self.offset(i - 1) - self.offset(i), self.offset(i + 1) - self.offset(i));
                let p = -hr / (hl * s) * dm + hl / (hr * s) * dp;
                let q = 2.0 / (hl * s) * dm + 2.0 / (hr * s) * dp;
                (self.y[0] + self.offset(i), p, q)
            })
            .collect()
    }
}

/// `(A - cλ̄(φ))`-based pieces of the initial data, as offsets from the tip.
pub fn build_initial_data(set: &BarrierSet, grid: Arc<MappedGrid>, tau0: f64) -> Result<EvolutionState> {
    let p = &set.params;
    let (n, g) = (p.n, p.gamma);
    let c = p.c_mid;
    let a = amplitude(n, g, c);
    let s0 = (-2.0 * g * tau0).exp();
    let w = (-g * tau0).exp();
    let fp = crate::profiles::FProfile::new(a, g, set.soliton.clone());
    let r_star = set.plus.r_lower;
    let phi_star = r_star * w;
    let mismatch = -s0 * fp.value(r_star) + lambda_bar_drop(n, g, c, phi_star);
    let bound = ((set.derived.a_minus - a) / 100.0).min((a - set.derived.a_plus) / 100.0);
    if !(mismatch.abs() < bound) {
        return Err(Error::InitialData(format!(
            "smallness condition fails at tau0 = {tau0}: |mismatch| = {:.3e} >= {bound:.3e}; increase tau0",
            mismatch.abs()
        )));
    }
    // λ̂₀ = -A + mismatch + s0 F(z) inside, -A + drop(φ) outside.
    let lam0 = -a + mismatch;
    let band = (0.9 * r_star, 1.1 * r_star);
    let offset = |phi: f64| -> f64 {
        let z = phi / w;
        let inner = s0 * fp.value(z);
        let outer = lambda_bar_drop(n, g, c, phi) - mismatch;
        if z <= band.0 {
            inner
        } else if z >= band.1 {
            outer
        } else {
            let t = (z - band.0) / (band.1 - band.0);
            let b = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
            (1.0 - b) * inner + b * outer
        }
    };
    let m = grid.intervals();
    let mut y = vec![0.0; m];
    y[0] = lam0;
    for i in 1..m {
        y[i] = offset(grid.phi[i]);
    }
    let phi_b = grid.phi[m];
    let boundary = -c * lambda_bar_jet(n, g, phi_b)?.v;
    let state = EvolutionState { grid, tau: tau0, y, boundary };
    let lam = state.lambda();
    for (i, (&phi, &l)) in state.grid.phi.iter().zip(&lam).enumerate() {
        let hi = set.plus.eval(phi, tau0);
        let lo = set.minus.eval(phi, tau0);
        if !(lo < l && l < hi) {
            return Err(Error::InitialData(format!(
                "sandwich fails at node {i}, phi = {phi:.6e}: {lo:.6e} < {l:.6e} < {hi:.6e} violated"
            )));
        }
    }
    Ok(state)
}

#[derive(Clone, Debug, Serialize)]
pub struct StepDiag {
    pub tau: f64,
    pub h: f64,
    pub tip_lambda: f64,
    /// Physical mean curvature at the tip, `n e^{(γ+1/2)τ} λ_φφ(0)/λ(0)^2`.
    pub sup_h: f64,
    /// Node with the largest mean curvature.
    pub argmax_h: usize,
    pub max_ratio: f64,
    /// `min(λ⁺ - λ)` and `min(λ - λ⁻)` over the nodes.
    pub margin_plus: f64,
    pub margin_minus: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub tau: f64,
    pub y: Vec<f64>,
    pub boundary: f64,
}

impl Snapshot {
    pub fn state(&self, grid: &Arc<MappedGrid>) -> EvolutionState {
        EvolutionState { grid: grid.clone(), tau: self.tau, y: self.y.clone(), boundary: self.boundary }
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionTrajectory {
    pub grid: Arc<MappedGrid>,
    pub n: u32,
    pub gamma: f64,
    pub a_tilde: f64,
    pub diagnostics: Vec<StepDiag>,
    pub snapshots: Vec<Snapshot>,
    pub tol_grid: f64,
    pub trapped: bool,
    pub first_violation: Option<(f64, f64)>,
    pub accepted: usize,
    pub rejected: usize,
}

impl EvolutionTrajectory {
    pub fn final_state(&self) -> EvolutionState {
        self.snapshots.last().expect("trajectory has snapshots").state(&self.grid)
    }
}

/// Mean curvatures within this relative distance of the tip value count as
/// attained at the tip; near-flat data puts rounding noise of this size on `H`.
pub const ARGMAX_TIE_RTOL: f64 = 1e-9;

pub fn diagnose(state: &EvolutionState, gamma: f64, n: u32, set: Option<&BarrierSet>, policy: ExecPolicy) -> StepDiag {
    let tau = state.tau;
    let jets = state.jets();
    let curv: Vec<NodeCurvature> =
        jets.iter().zip(&state.grid.phi).map(|(&(l, p, q), &phi)| curvature_from_lambda(phi, l, p, q, tau, gamma, n)).collect();
    let (mut argmax, mut hmax) = (0, f64::NEG_INFINITY);
    for (i, c) in curv.iter().enumerate() {
        if c.h > hmax {
            hmax = c.h;
            argmax = i;
        }
    }
    if hmax <= curv[0].h * (1.0 + ARGMAX_TIE_RTOL) {
        argmax = 0;
    }
    let max_ratio = curv.iter().map(|c| c.ratio).fold(f64::NEG_INFINITY, f64::max);
    let (margin_plus, margin_minus) = match set {
        Some(set) => {
            let lam = state.lambda();
            let phi = &state.grid.phi;
            let v = exec::map_range(policy, lam.len(), |i| {
                (set.plus.eval(phi[i], tau) - lam[i], lam[i] - set.minus.eval(phi[i], tau))
            });
            v.iter().fold((f64::INFINITY, f64::INFINITY), |a, b| (a.0.min(b.0), a.1.min(b.1)))
        }
        None => (f64::NAN, f64::NAN),
    };
    StepDiag { tau, h: 0.0, tip_lambda: state.y[0], sup_h: curv[0].h, argmax_h: argmax, max_ratio, margin_plus, margin_minus }
}

/// `5 (φ_b/N)^2`.
pub fn tol_grid(grid: &MappedGrid) -> f64 {
    5.0 * grid.nominal_spacing().powi(2)
}

pub fn rescaled_mol(p: &FlowParams, state: &EvolutionState) -> RescaledMol {
    RescaledMol { grid: state.grid.clone(), n: p.n, gamma: p.gamma, boundary: state.boundary, diffusion: true }
}

/// Evolves to `tau_end`, tracking trapping against `set` when given.
pub fn evolve(
    state: EvolutionState,
    p: &FlowParams,
    tau_end: f64,
    set: Option<&BarrierSet>,
    opts: &SolverOptions,
    policy: ExecPolicy,
) -> Result<EvolutionTrajectory> {
    let mol = rescaled_mol(p, &state);
    evolve_with(&mol, state, p, tau_end, set, opts, policy)
}

pub fn evolve_with<M: Mol>(
    mol: &M,
    mut state: EvolutionState,
    p: &FlowParams,
    tau_end: f64,
    set: Option<&BarrierSet>,
    opts: &SolverOptions,
    policy: ExecPolicy,
) -> Result<EvolutionTrajectory> {
    if !(tau_end > state.tau) {
        return Err(Error::InvalidParams(format!("tau_end = {tau_end} must exceed the start {}", state.tau)));
    }
    let tracked = if opts.track_trapping { set } else { None };
    let tolg = tol_grid(&state.grid);
    let mut ros = Ros2::new(opts.control.clone(), opts.h0);
    let mut traj = EvolutionTrajectory {
        grid: state.grid.clone(),
        n: p.n,
        gamma: p.gamma,
        a_tilde: p.a_tilde,
        diagnostics: vec![],
        snapshots: vec![Snapshot { tau: state.tau, y: state.y.clone(), boundary: state.boundary }],
        tol_grid: tolg,
        trapped: true,
        first_violation: None,
        accepted: 0,
        rejected: 0,
    };
    let record = |traj: &mut EvolutionTrajectory, st: &EvolutionState, h: f64| {
        let mut d = diagnose(st, p.gamma, p.n, tracked, policy);
        d.h = h;
        if d.margin_plus < -tolg || d.margin_minus < -tolg {
            traj.trapped = false;
            if traj.first_violation.is_none() {
                traj.first_violation = Some((st.tau, d.margin_plus.min(d.margin_minus)));
            }
        }
        traj.diagnostics.push(d);
    };
    record(&mut traj, &state, 0.0);
    let mut next_snap = state.tau + opts.snapshot_every;
    let mut steps = 0;
    while state.tau < tau_end - 1e-12 {
        if steps >= opts.max_steps {
            return Err(Error::StepUnderflow { tau: state.tau, h: ros.h, detail: format!("step budget {} exhausted", opts.max_steps) });
        }
        let target = next_snap.min(tau_end);
        let h = ros.step(mol, state.tau, &mut state.y, target - state.tau)?;
        state.tau += h;
        if (state.tau - target).abs() < 1e-12 * (1.0 + target.abs()) {
            state.tau = target;
        }
        state.boundary = mol.boundary(state.tau);
        steps += 1;
        record(&mut traj, &state, h);
        if state.tau >= next_snap - 1e-12 || state.tau >= tau_end - 1e-12 {
            traj.snapshots.push(Snapshot { tau: state.tau, y: state.y.clone(), boundary: state.boundary });
            next_snap += opts.snapshot_every;
        }
    }
    traj.accepted = ros.accepted;
    traj.rejected = ros.rejected;
    Ok(traj)
}

/// State of the physical flow; `y` is split like [`EvolutionState`] with `x` values.
#[derive(Clone, Debug)]
pub struct PhysicalState {
    pub grid: Arc<MappedGrid>,
    pub t: f64,
    pub y: Vec<f64>,
}

/// Maps a rescaled state to physical variables with `T` the vanishing time:
/// `t = T - e^{-τ}`, `x = y e^{(γ-1/2)τ}`, `u = φ e^{-τ/2}`.
pub fn to_physical(state: &EvolutionState, gamma: f64, t_vanish: f64) -> PhysicalState {
    let k = ((gamma - 0.5) * state.tau).exp();
    let l0 = state.y[0];
    let mut y = vec![0.0; state.y.len()];
    y[0] = -k / l0;
    for i in 1..y.len() {
        let li = l0 + state.y[i];
        y[i] = k * state.y[i] / (li * l0);
    }
    PhysicalState { grid: state.grid.clone(), t: t_vanish - (-state.tau).exp(), y }
}

/// Inverse of [`to_physical`].
pub fn to_rescaled(ps: &PhysicalState, gamma: f64, t_vanish: f64, boundary: f64) -> EvolutionState {
    let tau = -(t_vanish - ps.t).ln();
    let k = (-(gamma - 0.5) * tau).exp();
    let y0 = k * ps.y[0];
    let mut y = vec![0.0; ps.y.len()];
    y[0] = -1.0 / y0;
    for i in 1..y.len() {
        let wy = k * ps.y[i];
        y[i] = wy / ((y0 + wy) * y0);
    }
    EvolutionState { grid: ps.grid.clone(), tau, y, boundary }
}

#[derive(Clone, Debug, Serialize)]
pub struct PhysicalDiag {
    pub t: f64,
    pub tip_x: f64,
    /// `n x_uu(0)`.
    pub tip_curvature: f64,
    pub u_b: f64,
}

/// Evolves the physical flow from `ps` to `t_end < T`.
pub fn evolve_physical(mol: &PhysicalMol, mut ps: PhysicalState, t_end: f64, ctrl: StepControl, h0: f64) -> Result<(PhysicalState, Vec<PhysicalDiag>)> {
    if !(t_end > ps.t && t_end < mol.t_vanish) {
        return Err(Error::InvalidParams(format!("t_end = {t_end} must lie in ({}, {})", ps.t, mol.t_vanish)));
    }
    let mut ros = Ros2::new(ctrl, h0);
    let mut diags = Vec::new();
    let diag = |ps: &PhysicalState| {
        let sc = mol.scale(ps.t);
        PhysicalDiag {
            t: ps.t,
            tip_x: ps.y[0],
            tip_curvature: mol.n as f64 * ps.grid.tip_weight * ps.y[1] / (sc * sc),
            u_b: sc * ps.grid.phi[ps.grid.intervals()],
        }
    };
    diags.push(diag(&ps));
    while ps.t < t_end - 1e-15 {
        let h = ros.step(mol, ps.t, &mut ps.y, t_end - ps.t)?;
        ps.t += h;
        diags.push(diag(&ps));
    }
    Ok((ps, diags))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solves() {
        let lo = [0.0, 1.0, 1.0];
        let di = [4.0, 4.0, 4.0];
        let up = [1.0, 1.0, 0.0];
        let mut r = [5.0, 6.0, 5.0];
        thomas(&lo, &di, &up, &mut r).unwrap();
        for v in r {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    fn small_grid() -> Arc<MappedGrid> {
        Arc::new(
            MappedGrid::new(GridSpec {
                intervals: 200,
                phi_b: 2f64.sqrt() - 0.01,
                cylinder: 2f64.sqrt(),
                tip_scale: 1e-2,
                boundary_weight: 1.0,
            })
            .unwrap(),
        )
    }

    #[test]
    fn transport_only_keeps_stationary_profile() {
        let g = small_grid();
        let (n, gamma, c) = (2, 1.0, 0.8);
        let a = amplitude(n, gamma, c);
        let m = g.intervals();
        let mut y = vec![0.0; m];
        y[0] = -a;
        for i in 1..m {
            y[i] = lambda_bar_drop(n, gamma, c, g.phi[i]);
        }
        let boundary = -c * lambda_bar_jet(n, gamma, g.phi[m]).unwrap().v;
        let mol = RescaledMol { grid: g.clone(), n, gamma, boundary, diffusion: false };
        let mut f = vec![0.0; m];
        split_rhs(&mol, 5.0, &y, &mut f).unwrap();
        // the tip row still carries n q0 from the curvature of λ̄; away from it the transport balances
        for i in 10..m {
            let fi = f[i] + f[0];
            assert!(fi.abs() < 2e-3, "node {i}: {fi}");
        }
    }

    #[test]
    fn stage_solve_resolves_tiny_splits() {
        // entries near 1e17, nodal value 1 and split parts near 1e-20
        let m = 60;
        let gh = 1.0;
        let ell = 0.5;
        let alpha = 1.0 - gh * ell;
        let lo: Vec<f64> = (0..m).map(|i| if i == 0 { 0.0 } else { 1e17 * (1.0 + 0.01 * i as f64) }).collect();
        let up: Vec<f64> = (0..m).map(|i| if i + 1 == m { 0.0 } else { 1e17 * (1.3 + 0.02 * i as f64) }).collect();
        let ds = vec![0.0; m];
        let k0 = 1.0;
        let ks: Vec<f64> = (0..m).map(|i| if i == 0 { k0 } else { 1e-20 * (i * i) as f64 }).collect();
        let w = |i: usize| if i == 0 || i >= m { 0.0 } else { ks[i] };
        // nodal row i is α k_i - gh lo_i (k_{i-1} - k_i) - gh up_i (k_{i+1} - k_i); the last row has no right neighbour
        let row = |i: usize| {
            let left = if i == 0 { 0.0 } else { gh * lo[i] * (w(i - 1) - w(i)) };
            let right = if i + 1 == m { 0.0 } else { gh * up[i] * (w(i + 1) - w(i)) };
            alpha * w(i) - left - right
        };
        let r0 = alpha * k0 + row(0);
        let rhs: Vec<f64> = (0..m).map(|i| if i == 0 { r0 } else { row(i) - row(0) }).collect();
        let sys = StageSystem::new(&lo, &up, &ds, ell, gh).unwrap();
        let got = sys.solve(&rhs);
        assert!((got[0] - k0).abs() < 1e-14);
        for i in 1..m {
            assert!((got[i] - ks[i]).abs() < 1e-10 * ks[i], "node {i}: {} vs {}", got[i], ks[i]);
        }
    }

    #[test]
    fn jacobian_matches_differences() {
        let g = small_grid();
        let (n, gamma, c) = (2, 1.0, 0.8);
        let m = g.intervals();
        let mut y = vec![0.0; m];
        y[0] = -amplitude(n, gamma, c);
        for i in 1..m {
            y[i] = lambda_bar_drop(n, gamma, c, g.phi[i]) + 0.01 * g.phi[i].powi(2);
        }
        let boundary = -c * lambda_bar_jet(n, gamma, g.phi[m]).unwrap().v;
        let mol = RescaledMol { grid: g.clone(), n, gamma, boundary, diffusion: true };
        let tau = 0.7;
        let (mut lo, mut di, mut up, mut ds) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        nodal_jacobian(&mol, tau, &y, &mut lo, &mut di, &mut up, &mut ds);
        for i in [5, 100, m - 1] {
            let sum = lo[i] + di[i] + up[i] - mol.ell();
            assert!((sum - ds[i]).abs() <= 1e-6 * (1.0 + di[i].abs()), "row {i}: {sum} vs {}", ds[i]);
        }
        // split stage solve agrees with a plain nodal solve
        let gh = 0.01;
        let sys = StageSystem::new(&lo, &up, &ds, mol.ell(), gh).unwrap();
        let rhs: Vec<f64> = (0..m).map(|i| if i == 0 { 0.3 } else { 1e-3 * (i as f64).sin() }).collect();
        let ks = sys.solve(&rhs);
        let ml: Vec<f64> = lo.iter().map(|v| -gh * v).collect();
        let md: Vec<f64> = di.iter().map(|v| 1.0 - gh * v).collect();
        let mu: Vec<f64> = up.iter().map(|v| -gh * v).collect();
        let mut kn: Vec<f64> = (0..m).map(|i| if i == 0 { rhs[0] } else { rhs[i] + rhs[0] }).collect();
        thomas(&ml, &md, &mu, &mut kn).unwrap();
        for i in 1..m {
            assert!((ks[i] + ks[0] - kn[i]).abs() < 1e-9 * (1.0 + kn[i].abs()), "node {i}: {} {} {}", ks[i], ks[0], kn[i]);
        }
        let nodal = |y: &[f64]| {
            let mut f = vec![0.0; m];
            split_rhs(&mol, tau, y, &mut f).unwrap();
            (0..m).map(|i| if i == 0 { f[0] } else { f[i] + f[0] }).collect::<Vec<_>>()
        };
        let base = nodal(&y);
        for &j in &[0usize, 1, 50, 150, m - 1] {
            let eps = 1e-7;
            let mut yp = y.clone();
            // perturb nodal value j only
            if j == 0 {
                yp[0] += eps;
                for v in yp.iter_mut().skip(1) {
                    *v -= eps;
                }
            } else {
                yp[j] += eps;
            }
            let fp = nodal(&yp);
            for i in j.saturating_sub(1)..(j + 2).min(m) {
                let fd = (fp[i] - base[i]) / eps;
                let an = if i + 1 == j { up[i] } else if i == j { di[i] } else { lo[i] };
                assert!((fd - an).abs() <= 1e-4 * (1.0 + an.abs()), "J[{i},{j}] fd {fd} vs {an}");
            }
        }
    }
}
