//! Flow operators in each coordinate picture.
//!
//! Right-hand sides act on sampled functions with three-point differences.
//! The residual operators `T_z` and `F_φ` act on candidates that supply
//! analytic derivatives; they are evaluated after multiplying through by
//! `e^{2γτ}`, with the balance of the leading order terms taken analytically
//! so that the sign of an `O(e^{-2γτ})` residual survives in double precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coord {
    /// Physical axis `x`; values are the radius `u`.
    X,
    /// Physical radius `u`; values are the axial position `x`.
    U,
    /// Rescaled axis `y`; values are `φ`.
    Y,
    /// Rescaled radius `φ`.
    Phi,
    /// Tip variable `z = φ e^{γτ}`.
    Z,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    pub coord: Coord,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub time: f64,
}

impl SampledFunction {
    pub fn new(coord: Coord, grid: Vec<f64>, values: Vec<f64>, time: f64) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 3 {
            return Err(Error::InvalidParams("sampled function needs matching grid/values of length >= 3".into()));
        }
        if !grid.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidParams("grid must be strictly increasing".into()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("values must be finite".into()));
        }
        Ok(SampledFunction { coord, grid, values, time })
    }

    pub fn from_fn(coord: Coord, grid: Vec<f64>, time: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(coord, grid, values, time)
    }

    /// Whether the left end is the symmetry point of an even function.
    fn even_at_origin(&self) -> bool {
        matches!(self.coord, Coord::Phi | Coord::Z | Coord::U) && self.grid[0] == 0.0
    }

    /// Three-point first and second derivatives; one-sided at open ends and
    /// even reflection at a symmetric origin.
    pub fn derivatives(&self) -> (Vec<f64>, Vec<f64>) {
        let x = &self.grid;
        let f = &self.values;
        let m = x.len();
        let mut d1 = vec![0.0; m];
        let mut d2 = vec![0.0; m];
        for i in 1..m - 1 {
            let h1 = x[i] - x[i - 1];
            let h2 = x[i + 1] - x[i];
            d1[i] = -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1];
            d2[i] = 2.0 * (f[i - 1] / (h1 * (h1 + h2)) - f[i] / (h1 * h2) + f[i + 1] / (h2 * (h1 + h2)));
        }
        let edge = |i0: usize, i1: usize, i2: usize| {
            let h1 = x[i1] - x[i0];
            let h2 = x[i2] - x[i1];
            let d = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[i0] + (h1 + h2) / (h1 * h2) * f[i1]
                - h1 / (h2 * (h1 + h2)) * f[i2];
            let dd = 2.0 * (f[i0] / (h1 * (h1 + h2)) - f[i1] / (h1 * h2) + f[i2] / (h2 * (h1 + h2)));
            (d, dd)
        };
        if self.even_at_origin() {
            let h = x[1];
            d1[0] = 0.0;
            d2[0] = 2.0 * (f[1] - f[0]) / (h * h);
        } else {
            let (d, dd) = edge(0, 1, 2);
            d1[0] = d;
            d2[0] = dd;
        }
        let (d, dd) = {
            // mirror the left formula: step sizes reversed and the sign of d flipped
            let (i0, i1, i2) = (m - 1, m - 2, m - 3);
            let h1 = x[i0] - x[i1];
            let h2 = x[i1] - x[i2];
            let d = (2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[i0] - (h1 + h2) / (h1 * h2) * f[i1]
                + h1 / (h2 * (h1 + h2)) * f[i2];
            let dd = 2.0 * (f[i0] / (h1 * (h1 + h2)) - f[i1] / (h1 * h2) + f[i2] / (h2 * (h1 + h2)));
            (d, dd)
        };
        d1[m - 1] = d;
        d2[m - 1] = dd;
        (d1, d2)
    }
}

fn expect_coord(f: &SampledFunction, c: Coord) -> Result<()> {
    if f.coord != c {
        return Err(Error::InvalidParams(format!("expected a function of {c:?}, got {:?}", f.coord)));
    }
    Ok(())
}

/// Graph flow `u_t = u_xx/(1+u_x^2) - (n-1)/u`.
pub fn rhs_u(f: &SampledFunction, n: u32) -> Result<SampledFunction> {
    expect_coord(f, Coord::X)?;
    if let Some(i) = f.values.iter().position(|&u| u <= 0.0) {
        return Err(Error::Domain(format!("u <= 0 at x = {}", f.grid[i])));
    }
    let (d1, d2) = f.derivatives();
    let nm1 = n as f64 - 1.0;
    let v = f
        .values
        .iter()
        .zip(d1.iter().zip(&d2))
        .map(|(&u, (&p, &q))| q / (1.0 + p * p) - nm1 / u)
        .collect();
    SampledFunction::new(Coord::X, f.grid.clone(), v, f.time)
}

/// Rescaled graph flow for `φ(y, τ)`.
pub fn rhs_phi(f: &SampledFunction, tau: f64, gamma: f64, n: u32) -> Result<SampledFunction> {
    expect_coord(f, Coord::Y)?;
    if let Some(i) = f.values.iter().position(|&u| u <= 0.0) {
        return Err(Error::Domain(format!("phi <= 0 at y = {}", f.grid[i])));
    }
    let (d1, d2) = f.derivatives();
    let nm1 = n as f64 - 1.0;
    let s = (-2.0 * gamma * tau).exp();
    let v = (0..f.grid.len())
        .map(|i| {
            let (y, p, q, phi) = (f.grid[i], d1[i], d2[i], f.values[i]);
            s * q / (1.0 + s * p * p) - (0.5 - gamma) * y * p - nm1 / phi + phi / 2.0
        })
        .collect();
    SampledFunction::new(Coord::Y, f.grid.clone(), v, tau)
}

fn check_negative(f: &SampledFunction) -> Result<()> {
    if let Some(i) = f.values.iter().position(|&l| l >= 0.0) {
        return Err(Error::Domain(format!("lambda >= 0 at {} (operator has lambda in denominators)", f.grid[i])));
    }
    Ok(())
}

/// `∂_τ λ` at fixed `φ`.
pub fn rhs_lambda_phi(f: &SampledFunction, tau: f64, gamma: f64, n: u32) -> Result<SampledFunction> {
    expect_coord(f, Coord::Phi)?;
    check_negative(f)?;
    let (d1, d2) = f.derivatives();
    let nm1 = n as f64 - 1.0;
    let e = (2.0 * gamma * tau).exp();
    let v = (0..f.grid.len())
        .map(|i| {
            let (phi, l, p, q) = (f.grid[i], f.values[i], d1[i], d2[i]);
            let diff = (q - 2.0 * p * p / l) / (1.0 + e * p * p / l.powi(4));
            let transport = if phi == 0.0 { nm1 * q } else { (nm1 / phi - phi / 2.0) * p };
            diff + transport + (gamma - 0.5) * l
        })
        .collect();
    SampledFunction::new(Coord::Phi, f.grid.clone(), v, tau)
}

/// `∂_τ λ` at fixed `z`.
pub fn rhs_lambda_z(f: &SampledFunction, tau: f64, gamma: f64, n: u32) -> Result<SampledFunction> {
    expect_coord(f, Coord::Z)?;
    check_negative(f)?;
    let (d1, d2) = f.derivatives();
    let nm1 = n as f64 - 1.0;
    let e = (2.0 * gamma * tau).exp();
    let v = (0..f.grid.len())
        .map(|i| {
            let (z, l, p, q) = (f.grid[i], f.values[i], d1[i], d2[i]);
            let diff = e * (q - 2.0 * p * p / l) / (1.0 + e * e * p * p / l.powi(4));
            let radial = if z == 0.0 { e * nm1 * q } else { e * nm1 * p / z };
            diff + radial - (gamma + 0.5) * z * p + (gamma - 0.5) * l
        })
        .collect();
    SampledFunction::new(Coord::Z, f.grid.clone(), v, tau)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorTag {
    Tz,
    FPhi,
}

#[derive(Clone, Debug)]
pub struct OperatorResidual {
    pub tag: OperatorTag,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `e^{2γτ}` times the residual; same sign, order one.
    pub scaled: Vec<f64>,
    pub time: f64,
}

/// Candidate in the tip picture:
/// `λ = -a + e^{-2γτ} (F(z) + η(z, τ))`, where `F` (if present) solves the
/// F-profile equation for amplitude `a`.
#[derive(Clone, Copy, Debug)]
pub struct ZJet {
    pub a: f64,
    pub profile: Option<Jet>,
    pub eta: Jet,
    /// `∂_τ (F + η)` at fixed `z`.
    pub phi_tau: f64,
}

pub trait ZCandidate {
    fn z_jet(&self, z: f64, tau: f64) -> ZJet;
}

/// `λ ≡ -a`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantCandidate(pub f64);

impl ZCandidate for ConstantCandidate {
    fn z_jet(&self, _z: f64, _tau: f64) -> ZJet {
        ZJet { a: self.0, profile: None, eta: Jet { v: 0.0, d1: 0.0, d2: 0.0 }, phi_tau: 0.0 }
    }
}

/// `e^{2γτ} T_z[λ]` at one point.
pub fn t_z_scaled(j: &ZJet, z: f64, tau: f64, gamma: f64, n: u32) -> Result<f64> {
    let nm1 = n as f64 - 1.0;
    let s = (-2.0 * gamma * tau).exp();
    let a = j.a;
    let fj = j.profile.unwrap_or(Jet { v: 0.0, d1: 0.0, d2: 0.0 });
    let big = fj.v + j.eta.v;
    let big1 = fj.d1 + j.eta.d1;
    let lam = -a + s * big;
    if lam >= 0.0 {
        return Err(Error::Domain(format!("lambda >= 0 at z = {z}")));
    }
    let l4 = lam.powi(4);
    let g_full = 1.0 + big1 * big1 / l4;
    let radial_eta = if z == 0.0 { nm1 * j.eta.d2 } else { nm1 * j.eta.d1 / z };
    let bracket = if j.profile.is_some() {
        let a4 = a.powi(4);
        let g0 = 1.0 + fj.d1 * fj.d1 / a4;
        let a2l2 = a * a + lam * lam;
        let a4_minus_l4 = s * big * (2.0 * a - s * big) * a2l2;
        let gdiff = (2.0 * fj.d1 * j.eta.d1 + j.eta.d1 * j.eta.d1) / l4 + fj.d1 * fj.d1 * a4_minus_l4 / (a4 * l4);
        fj.d2 * gdiff / (g0 * g_full) - j.eta.d2 / g_full - radial_eta
    } else {
        (gamma - 0.5) * a - j.eta.d2 / g_full - radial_eta
    };
    Ok(bracket / s + j.phi_tau - 2.0 * gamma * big
        + 2.0 * big1 * big1 / (lam * g_full)
        + (gamma + 0.5) * z * big1
        + (0.5 - gamma) * big)
}

pub fn residual_t_z<C: ZCandidate + ?Sized>(
    cand: &C,
    grid: &[f64],
    tau: f64,
    gamma: f64,
    n: u32,
) -> Result<OperatorResidual> {
    let s = (-2.0 * gamma * tau).exp();
    let scaled = grid
        .iter()
        .map(|&z| t_z_scaled(&cand.z_jet(z.abs(), tau), z.abs(), tau, gamma, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorResidual {
        tag: OperatorTag::Tz,
        grid: grid.to_vec(),
        values: scaled.iter().map(|r| r * s).collect(),
        scaled,
        time: tau,
    })
}

/// Candidate in the exterior picture: `λ = σ(φ) + π(φ, τ)` where `σ`, when
/// flagged, satisfies `((n-1)/φ - φ/2) σ' + (γ-1/2) σ = 0` exactly.
#[derive(Clone, Copy, Debug)]
pub struct PhiJet {
    pub stationary: Option<Jet>,
    pub pert: Jet,
    pub pert_tau: f64,
}

impl PhiJet {
    pub fn lambda(&self) -> Jet {
        let s = self.stationary.unwrap_or(Jet { v: 0.0, d1: 0.0, d2: 0.0 });
        Jet { v: s.v + self.pert.v, d1: s.d1 + self.pert.d1, d2: s.d2 + self.pert.d2 }
    }
}

pub trait PhiCandidate {
    fn phi_jet(&self, phi: f64, tau: f64) -> PhiJet;
}

/// `e^{2γτ} F_φ[λ]` at one point.
pub fn f_phi_scaled(j: &PhiJet, phi: f64, tau: f64, gamma: f64, n: u32) -> Result<f64> {
    if phi == 0.0 {
        return Err(Error::Domain("F_phi evaluated at the pole phi = 0".into()));
    }
    let nm1 = n as f64 - 1.0;
    let e = (2.0 * gamma * tau).exp();
    let l = j.lambda();
    if l.v >= 0.0 {
        return Err(Error::Domain(format!("lambda >= 0 at phi = {phi}")));
    }
    let v = nm1 / phi - phi / 2.0;
    let diff = (l.d2 - 2.0 * l.d1 * l.d1 / l.v) / (1.0 + e * l.d1 * l.d1 / l.v.powi(4));
    let lin = -v * j.pert.d1 + (0.5 - gamma) * j.pert.v;
    Ok(e * (j.pert_tau - diff + lin))
}

pub fn residual_f_phi<C: PhiCandidate + ?Sized>(
    cand: &C,
    grid: &[f64],
    tau: f64,
    gamma: f64,
    n: u32,
) -> Result<OperatorResidual> {
    let s = (-2.0 * gamma * tau).exp();
    let scaled = grid
        .iter()
        .map(|&p| f_phi_scaled(&cand.phi_jet(p.abs(), tau), p.abs(), tau, gamma, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorResidual {
        tag: OperatorTag::FPhi,
        grid: grid.to_vec(),
        values: scaled.iter().map(|r| r * s).collect(),
        scaled,
        time: tau,
    })
}

/// `F_φ` with spatial derivatives replaced by three-point differences of the
/// sampled candidate (the τ-derivative stays analytic).
pub fn residual_f_phi_sampled<C: PhiCandidate + ?Sized>(
    cand: &C,
    grid: &[f64],
    tau: f64,
    gamma: f64,
    n: u32,
) -> Result<OperatorResidual> {
    let jets: Vec<PhiJet> = grid.iter().map(|&p| cand.phi_jet(p, tau)).collect();
    let f = SampledFunction::new(Coord::Phi, grid.to_vec(), jets.iter().map(|j| j.lambda().v).collect(), tau)?;
    let (d1, d2) = f.derivatives();
    let nm1 = n as f64 - 1.0;
    let e = (2.0 * gamma * tau).exp();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (phi, l, p, q) = (grid[i], f.values[i], d1[i], d2[i]);
        if phi == 0.0 || l >= 0.0 {
            return Err(Error::Domain(format!("sampled F_phi undefined at phi = {phi}")));
        }
        let diff = (q - 2.0 * p * p / l) / (1.0 + e * p * p / l.powi(4));
        values.push(jets[i].pert_tau - diff - (nm1 / phi - phi / 2.0) * p + (0.5 - gamma) * l);
    }
    Ok(OperatorResidual {
        tag: OperatorTag::FPhi,
        grid: grid.to_vec(),
        scaled: values.iter().map(|r| r * e).collect(),
        values,
        time: tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_u_cylinder() {
        let g: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let f = SampledFunction::from_fn(Coord::X, g.clone(), 0.0, |_| 1.0).unwrap();
        let r = rhs_u(&f, 2).unwrap();
        assert!(r.values.iter().all(|&v| (v + 1.0).abs() < 1e-12));
        let f = SampledFunction::from_fn(Coord::X, g, 0.0, |_| 0.5).unwrap();
        let r = rhs_u(&f, 3).unwrap();
        assert!(r.values.iter().all(|&v| (v + 4.0).abs() < 1e-12));
    }

    #[test]
    fn rhs_u_rejects_nonpositive() {
        let g: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let f = SampledFunction::from_fn(Coord::X, g, 0.0, |x| x - 2.0).unwrap();
        assert!(rhs_u(&f, 2).is_err());
    }

    #[test]
    fn rhs_phi_cylinder_and_perturbation() {
        let g: Vec<f64> = (0..40).map(|i| 0.5 + i as f64 * 0.1).collect();
        let c = 2f64.sqrt();
        let f = SampledFunction::from_fn(Coord::Y, g.clone(), 3.0, |_| c).unwrap();
        let r = rhs_phi(&f, 3.0, 1.0, 2).unwrap();
        assert!(r.values.iter().all(|v| v.abs() <= 1e-12));
        let up = SampledFunction::from_fn(Coord::Y, g.clone(), 3.0, |_| c + 0.01).unwrap();
        let dn = SampledFunction::from_fn(Coord::Y, g, 3.0, |_| c - 0.01).unwrap();
        assert!(rhs_phi(&up, 3.0, 1.0, 2).unwrap().values.iter().all(|&v| v > 0.0));
        assert!(rhs_phi(&dn, 3.0, 1.0, 2).unwrap().values.iter().all(|&v| v < 0.0));
    }

    #[test]
    fn constants_are_strict_supersolutions() {
        let r = residual_t_z(&ConstantCandidate(1.3), &[0.0, 0.5, 4.0], 2.0, 1.0, 2).unwrap();
        for v in r.values {
            assert!((v - 0.5 * 1.3).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_second_order() {
        let err = |m: usize| {
            let g: Vec<f64> = (0..=m).map(|i| (i as f64 / m as f64).powf(1.3)).collect();
            let f = SampledFunction::from_fn(Coord::X, g.clone(), 0.0, |x| (2.0 * x).sin()).unwrap();
            let (d1, _) = f.derivatives();
            g.iter().zip(&d1).map(|(&x, &d)| (d - 2.0 * (2.0 * x).cos()).abs()).fold(0.0, f64::max)
        };
        let order = (err(100) / err(200)).log2();
        assert!(order > 1.8, "order {order}");
    }
}
