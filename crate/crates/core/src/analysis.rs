//! Curvature diagnostics and rate fits on evolved data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{Coord, SampledFunction};
use crate::profiles::ProfileSolution;
use crate::solver::EvolutionTrajectory;

/// Principal curvatures at one point of a rotationally symmetric graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NodeCurvature {
    pub k_rot: f64,
    pub k_axis: f64,
    pub h: f64,
    pub ratio: f64,
}

/// Physical curvatures of the surface whose rescaled data at `φ` is the jet
/// `(λ, λ_φ, λ_φφ)` at time `τ`.
pub fn curvature_from_lambda(phi: f64, l: f64, lp: f64, lpp: f64, tau: f64, gamma: f64, n: u32) -> NodeCurvature {
    let amp = ((gamma + 0.5) * tau).exp();
    let e = (2.0 * gamma * tau).exp();
    let l2 = l * l;
    let yp = lp / l2;
    let ypp = lpp / l2 - 2.0 * lp * lp / (l2 * l);
    if phi == 0.0 {
        let k = amp * ypp;
        return NodeCurvature { k_rot: k, k_axis: k, h: n as f64 * k, ratio: 1.0 };
    }
    let w = 1.0 + e * yp * yp;
    let k_rot = amp * yp / (phi * w.sqrt());
    let k_axis = amp * ypp / w.powf(1.5);
    NodeCurvature { k_rot, k_axis, h: (n as f64 - 1.0) * k_rot + k_axis, ratio: phi * ypp / (yp * w) }
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureProfile {
    pub grid: Vec<f64>,
    pub k_rot: Vec<f64>,
    pub k_axis: Vec<f64>,
    pub h: Vec<f64>,
    pub ratio: Vec<f64>,
}

/// Curvatures of a graph `u(x)` (`Coord::X`) or of an inverse graph `x(u)`
/// (`Coord::U`, tip at `u = 0`).
pub fn curvatures(profile: &SampledFunction, n: u32) -> Result<CurvatureProfile> {
    let (d1, d2) = profile.derivatives();
    let m = profile.grid.len();
    let mut out = CurvatureProfile {
        grid: profile.grid.clone(),
        k_rot: Vec::with_capacity(m),
        k_axis: Vec::with_capacity(m),
        h: Vec::with_capacity(m),
        ratio: Vec::with_capacity(m),
    };
    let nm1 = n as f64 - 1.0;
    for i in 0..m {
        let (kr, ka, r) = match profile.coord {
            Coord::X => {
                let u = profile.values[i];
                if !(u > 0.0) {
                    return Err(Error::Domain(format!("radius u = {u} <= 0 at x = {}", profile.grid[i])));
                }
                let w = 1.0 + d1[i] * d1[i];
                (1.0 / (u * w.sqrt()), -d2[i] / w.powf(1.5), -u * d2[i] / w)
            }
            Coord::U => {
                let u = profile.grid[i];
                if u < 0.0 {
                    return Err(Error::Domain(format!("radius u = {u} < 0")));
                }
                if u == 0.0 {
                    (d2[i], d2[i], 1.0)
                } else {
                    let w = 1.0 + d1[i] * d1[i];
                    (d1[i] / (u * w.sqrt()), d2[i] / w.powf(1.5), u * d2[i] / (d1[i] * w))
                }
            }
            c => return Err(Error::InvalidParams(format!("curvatures need an x or u graph, got {c:?}"))),
        };
        out.k_rot.push(kr);
        out.k_axis.push(ka);
        out.h.push(nm1 * kr + ka);
        out.ratio.push(r);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioReport {
    pub max_ratio: f64,
    pub tau_at_max: f64,
    /// Diagnostics whose mean-curvature maximum is off the tip node.
    pub off_tip: Vec<f64>,
    pub samples: usize,
}

impl RatioReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_ratio <= 1.0 + tol && self.off_tip.is_empty()
    }
}

pub fn check_ratio_principle(traj: &EvolutionTrajectory) -> RatioReport {
    let mut rep = RatioReport { max_ratio: f64::NEG_INFINITY, tau_at_max: f64::NAN, off_tip: vec![], samples: 0 };
    for d in &traj.diagnostics {
        rep.samples += 1;
        if d.max_ratio > rep.max_ratio {
            rep.max_ratio = d.max_ratio;
            rep.tau_at_max = d.tau;
        }
        if d.argmax_h != 0 {
            rep.off_tip.push(d.tau);
        }
    }
    rep
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the linear fit.
    pub residual: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let m = x.len();
    if m < 8 || y.len() != m {
        return Err(Error::Analysis(format!("fit needs at least 8 points, got {m}")));
    }
    let mf = m as f64;
    let mx = x.iter().sum::<f64>() / mf;
    let my = y.iter().sum::<f64>() / mf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Analysis("degenerate fit abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(RateFit { exponent: slope, intercept, residual: (rss / mf).sqrt(), window, points: m })
}

/// Fit window as fractions of the τ-range measured from its end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitWindow {
    pub last_fraction: f64,
    pub trim_fraction: f64,
    pub samples: usize,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow { last_fraction: 0.4, trim_fraction: 0.02, samples: 64 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupFit {
    pub fit: RateFit,
    pub expected_exponent: f64,
    pub amplitude: f64,
    pub expected_amplitude: f64,
    /// Exponents over the two halves of the window.
    pub halves: (f64, f64),
}

impl BlowupFit {
    pub fn exponent_error(&self) -> f64 {
        (self.fit.exponent / self.expected_exponent - 1.0).abs()
    }

    pub fn amplitude_error(&self) -> f64 {
        (self.amplitude / self.expected_amplitude - 1.0).abs()
    }

    pub fn half_spread(&self) -> f64 {
        ((self.halves.0 - self.halves.1) / self.fit.exponent).abs()
    }
}

/// Linear interpolation of `(τ, v)` samples sorted by τ.
fn interp(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    let k = ts.partition_point(|&s| s < t).clamp(1, ts.len() - 1);
    let (t0, t1) = (ts[k - 1], ts[k]);
    if t1 == t0 {
        return vs[k];
    }
    vs[k - 1] + (vs[k] - vs[k - 1]) * (t - t0) / (t1 - t0)
}

fn fit_log_h(ts: &[f64], lh: &[f64], lo: f64, hi: f64, samples: usize) -> Result<RateFit> {
    let x: Vec<f64> = (0..samples).map(|k| lo + (hi - lo) * k as f64 / (samples - 1) as f64).collect();
    let y: Vec<f64> = x.iter().map(|&t| interp(ts, lh, t)).collect();
    // abscissa log(T - t) = -τ
    let xs: Vec<f64> = x.iter().map(|t| -t).collect();
    linear_fit(&xs, &y, (lo, hi))
}

/// Slope of `log sup H` against `log(T - t)` over the trailing window.
pub fn fit_blowup_exponent(traj: &EvolutionTrajectory, window: FitWindow) -> Result<BlowupFit> {
    let d = &traj.diagnostics;
    if d.len() < 8 {
        return Err(Error::Analysis(format!("trajectory has only {} samples", d.len())));
    }
    let ts: Vec<f64> = d.iter().map(|s| s.tau).collect();
    let (t0, t1) = (ts[0], ts[ts.len() - 1]);
    let len = t1 - t0;
    if len < 4.6 {
        return Err(Error::Analysis(format!("tau-range {len:.3} covers less than two decades of T - t")));
    }
    if d.iter().any(|s| !(s.sup_h > 0.0)) {
        return Err(Error::Analysis("non-positive tip curvature in trajectory".into()));
    }
    let lh: Vec<f64> = d.iter().map(|s| s.sup_h.ln()).collect();
    let lo = t1 - window.last_fraction * len;
    let hi = t1 - window.trim_fraction * len;
    let fit = fit_log_h(&ts, &lh, lo, hi, window.samples)?;
    let mid = 0.5 * (lo + hi);
    let a = fit_log_h(&ts, &lh, lo, mid, window.samples)?;
    let b = fit_log_h(&ts, &lh, mid, hi, window.samples)?;
    Ok(BlowupFit {
        expected_exponent: -(traj.gamma + 0.5),
        amplitude: fit.intercept.exp(),
        expected_amplitude: (traj.gamma - 0.5) * traj.a_tilde,
        halves: (a.exponent, b.exponent),
        fit,
    })
}

/// Slope of `log(2(n-1) - φ^2)` against `log y` over the largest-`y` decade
/// of a rescaled `λ(φ)` sample.
pub fn fit_exterior_rate(lambda: &SampledFunction, n: u32) -> Result<RateFit> {
    if lambda.coord != Coord::Phi {
        return Err(Error::InvalidParams("exterior rate needs a λ(φ) sample".into()));
    }
    let r2 = 2.0 * (n as f64 - 1.0);
    let pts: Vec<(f64, f64)> = lambda
        .grid
        .iter()
        .zip(&lambda.values)
        .filter(|(&phi, &l)| l < 0.0 && phi * phi < r2)
        .map(|(&phi, &l)| (-1.0 / l, r2 - phi * phi))
        .collect();
    let y_max = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let sel: Vec<&(f64, f64)> = pts.iter().filter(|p| p.0 >= y_max / 10.0).collect();
    if sel.len() < 8 {
        return Err(Error::Analysis(format!("only {} exterior samples in the top decade of y", sel.len())));
    }
    let x: Vec<f64> = sel.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = sel.iter().map(|p| p.1.ln()).collect();
    let lo = sel.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    linear_fit(&x, &y, (lo, y_max))
}

/// `e(τ) = max_{z <= z_window} |e^{2γτ}(y(z) - y(0)) - P(kÃz)/(kÃ)|` per snapshot, `k = γ - 1/2`.
pub fn soliton_convergence(traj: &EvolutionTrajectory, profile: &ProfileSolution, z_window: f64) -> Result<Vec<(f64, f64)>> {
    let k = (traj.gamma - 0.5) * traj.a_tilde;
    if k * z_window > profile.z_max() {
        return Err(Error::Analysis(format!("z window {z_window} exceeds the profile range")));
    }
    let phi = &traj.grid.phi;
    let mut out = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let st = snap.state(&traj.grid);
        let scale = (traj.gamma * st.tau).exp();
        let inside = phi.iter().take_while(|&&p| p * scale <= z_window).count();
        let h_window = if inside < phi.len() { (phi[inside] - phi[inside - 1]) * scale } else { f64::INFINITY };
        if inside < 5 || h_window > z_window / 4.0 {
            return Err(Error::Analysis(format!(
                "z window {z_window} not resolved at tau = {:.3}: {inside} nodes, spacing {h_window:.3e}",
                st.tau
            )));
        }
        let e2 = (2.0 * traj.gamma * st.tau).exp();
        let l0 = st.y[0];
        let mut err: f64 = 0.0;
        for (i, &p) in phi.iter().enumerate().take(inside).skip(1) {
            let w = st.offset(i);
            let dy = w / ((l0 + w) * l0);
            let z = p * scale;
            err = err.max((e2 * dy - profile.value(k * z) / k).abs());
        }
        out.push((st.tau, err));
    }
    Ok(out)
}

/// Vanishing time of the cylinder of initial radius `r0`: `r0^2/(2(n-1))`.
pub fn estimate_vanishing_time(r0: f64, n: u32) -> Result<f64> {
    if !(r0 > 0.0) || n < 2 {
        return Err(Error::InvalidParams(format!("need r0 > 0 and n >= 2, got r0 = {r0}, n = {n}")));
    }
    Ok(r0 * r0 / (2.0 * (n as f64 - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_curvatures() {
        let r0 = 1.3;
        let f = SampledFunction::from_fn(Coord::X, (0..20).map(|i| i as f64 * 0.1).collect(), 0.0, |_| r0).unwrap();
        let c = curvatures(&f, 3).unwrap();
        for i in 0..20 {
            assert!((c.k_rot[i] - 1.0 / r0).abs() < 1e-14);
            assert!(c.k_axis[i].abs() < 1e-12);
            assert!((c.h[i] - 2.0 / r0).abs() < 1e-12);
            assert!(c.ratio[i].abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_cap_is_umbilic() {
        let rho = 2.0;
        let xs: Vec<f64> = (0..=2000).map(|i| -1.5 + 3.0 * i as f64 / 2000.0).collect();
        let f = SampledFunction::from_fn(Coord::X, xs, 0.0, |x| (rho * rho - x * x).sqrt()).unwrap();
        let c = curvatures(&f, 3).unwrap();
        for i in 1..2000 {
            assert!((c.ratio[i] - 1.0).abs() < 1e-6, "R = {}", c.ratio[i]);
            assert!((c.h[i] - 3.0 / rho).abs() < 1e-6);
        }
        let us: Vec<f64> = (0..=2000).map(|i| 1.5 * i as f64 / 2000.0).collect();
        let g = SampledFunction::from_fn(Coord::U, us, 0.0, |u| rho - (rho * rho - u * u).sqrt()).unwrap();
        let c = curvatures(&g, 3).unwrap();
        assert!((c.ratio[0] - 1.0).abs() < 1e-15);
        for i in 0..2000 {
            assert!((c.h[i] - 3.0 / rho).abs() < 1e-6, "i {i}: {}", c.h[i]);
        }
    }

    #[test]
    fn ratio_identity_and_guard() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
        let f = SampledFunction::from_fn(Coord::X, xs.clone(), 0.0, |x| 1.0 + 0.3 * x * x).unwrap();
        let c = curvatures(&f, 2).unwrap();
        for i in 0..50 {
            assert!((c.ratio[i] - c.k_axis[i] / c.k_rot[i]).abs() < 1e-12);
        }
        let bad = SampledFunction::from_fn(Coord::X, xs, 0.0, |x| 1.0 - x).unwrap();
        assert!(curvatures(&bad, 2).is_err());
    }

    #[test]
    fn lambda_jet_matches_graph_formula() {
        // y = 1 + φ^2 at τ = 0, γ = 1: x_u = 2φ, x_uu = 2
        let phi = 0.7;
        let y = 1.0 + phi * phi;
        let (l, lp, lpp) = (-1.0 / y, 2.0 * phi / (y * y), 2.0 / (y * y) - 8.0 * phi * phi / (y * y * y));
        let c = curvature_from_lambda(phi, l, lp, lpp, 0.0, 1.0, 2);
        let w: f64 = 1.0 + 4.0 * phi * phi;
        assert!((c.k_rot - 2.0 * phi / (phi * w.sqrt())).abs() < 1e-12);
        assert!((c.k_axis - 2.0 / w.powf(1.5)).abs() < 1e-12);
        assert!((c.ratio - c.k_axis / c.k_rot).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 1.5 * v).collect();
        let f = linear_fit(&x, &y, (0.0, 9.0)).unwrap();
        assert!((f.exponent + 1.5).abs() < 1e-14 && (f.intercept - 3.0).abs() < 1e-13);
        assert!(linear_fit(&x[..5], &y[..5], (0.0, 4.0)).is_err());
    }

    #[test]
    fn vanishing_time() {
        for n in 2..6 {
            let r0 = (2.0 * (n as f64 - 1.0)).sqrt();
            assert!((estimate_vanishing_time(r0, n).unwrap() - 1.0).abs() < 1e-15);
        }
        assert_eq!(estimate_vanishing_time(2.0, 2).unwrap(), 2.0);
        assert!(estimate_vanishing_time(0.0, 2).is_err());
    }
}
