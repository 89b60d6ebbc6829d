//! Tip profile ODEs and exterior closed forms.
//!
//! `P` solves `P''/(1+P'^2) + (n-1)P'/z = 1`, `P(0) = P'(0) = 0` (for `n = 1`
//! it is `-log cos z`). The interior λ-profile is the rescaling
//! `F(z) = A^3/(γ-1/2) P(z (γ-1/2)/A)`, and `Q` solves
//! `-A^{-2} [Q'/(1+F_z^2/A^4)]' - (n-1) Q'/z = 1`, `Q(0) = Q'(0) = 0`.
//!
//! Both IVPs are singular at the origin; they start at `z0` from the leading
//! series term and are integrated node to node with [`Dopri5`].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ode::Dopri5;

pub const SERIES_CUTOFF: f64 = 1e-4;

/// Which ODE a tabulation belongs to; decides the tail rule past the last node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    /// Soliton profile P.
    Soliton,
    /// Interior correction Q.
    Correction,
}

#[derive(Clone, Debug)]
pub struct ProfileSolution {
    pub kind: ProfileKind,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub deriv: Vec<f64>,
    /// Second derivative at the nodes, taken from the ODE itself.
    pub second: Vec<f64>,
    /// Integrated ODE residual per unit length on the segment ending at each node.
    pub residual: Vec<f64>,
    pub n_dim: u32,
    pub series_cutoff: f64,
    pub tol: f64,
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

impl ProfileSolution {
    pub fn z_max(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    fn segment(&self, z: f64) -> usize {
        match self.grid.binary_search_by(|g| g.partial_cmp(&z).unwrap()) {
            Ok(i) => i.min(self.grid.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.grid.len() - 2),
        }
    }

    /// Profile value; even in `z`.
    pub fn value(&self, z: f64) -> f64 {
        let z = z.abs();
        if z > self.z_max() {
            return self.tail(z).0;
        }
        let i = self.segment(z);
        hermite(
            self.grid[i],
            self.grid[i + 1],
            self.values[i],
            self.values[i + 1],
            self.deriv[i],
            self.deriv[i + 1],
            z,
        )
    }

    /// First derivative; odd in `z`.
    pub fn derivative(&self, z: f64) -> f64 {
        let s = z.signum();
        let z = z.abs();
        if z > self.z_max() {
            return s * self.tail(z).1;
        }
        let i = self.segment(z);
        s * hermite(
            self.grid[i],
            self.grid[i + 1],
            self.deriv[i],
            self.deriv[i + 1],
            self.second[i],
            self.second[i + 1],
            z,
        )
    }

    fn tail(&self, z: f64) -> (f64, f64) {
        match self.kind {
            ProfileKind::Soliton => {
                let m = 2.0 * (self.n_dim as f64 - 1.0);
                (z * z / m - z.ln(), z / m - 1.0 / z)
            }
            ProfileKind::Correction => {
                let k = self.grid.len() - 1;
                let dz = z - self.grid[k];
                (
                    self.values[k] + self.deriv[k] * dz + 0.5 * self.second[k] * dz * dz,
                    self.deriv[k] + self.second[k] * dz,
                )
            }
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// Node spacing used for tabulation: geometric near the origin, capped absolutely.
fn next_node(z: f64, h_cap: f64) -> f64 {
    z + (0.01 * z).min(h_cap)
}

fn default_cap(n: u32) -> f64 {
    if n == 1 {
        5e-4
    } else {
        0.05
    }
}

/// Second derivative of P from the ODE, with the `z -> 0` limit `1/n`.
pub fn soliton_second(n: u32, z: f64, p1: f64) -> f64 {
    let nm1 = n as f64 - 1.0;
    if z == 0.0 {
        return 1.0 / n as f64;
    }
    (1.0 + p1 * p1) * (1.0 - nm1 * p1 / z)
}

fn simpson(a: f64, m: f64, b: f64) -> f64 {
    (a + 4.0 * m + b) / 6.0
}

/// Integrates the soliton profile ODE on `[0, z_max]`.
pub fn solve_grim_reaper_profile(n: u32, z_max: f64, tol: f64) -> Result<ProfileSolution> {
    if n < 1 {
        return Err(Error::InvalidParams("profile dimension n must be at least 1".into()));
    }
    if !(1e-14..1e-4).contains(&tol) {
        return Err(Error::InvalidParams(format!("profile tol {tol:e} outside (1e-14, 1e-4)")));
    }
    if n == 1 && z_max >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Domain(format!(
            "n = 1 profile blows up at pi/2; z_max = {z_max} is out of range"
        )));
    }
    if z_max < 1.0 {
        return Err(Error::InvalidParams(format!("z_max = {z_max} must be at least 1")));
    }
    let nf = n as f64;
    let nm1 = nf - 1.0;
    let z0 = SERIES_CUTOFF;
    let mut grid = vec![0.0, z0];
    let mut values = vec![0.0, z0 * z0 / (2.0 * nf)];
    let mut deriv = vec![0.0, z0 / nf];
    let mut y = [values[1], deriv[1]];
    // Step control on (P, arctan P'): the residual is measured in the same variable.
    let mut ode = Dopri5::new(tol * 1e-2);
    let mut rhs = |z: f64, y: &[f64], d: &mut [f64]| {
        d[0] = y[1];
        d[1] = (1.0 + y[1] * y[1]) * (1.0 - nm1 * y[1] / z);
    };
    // Hermite interpolation error scales as cap^4; keep it in step with tol.
    let cap = default_cap(n) * (tol / 1e-10).powf(0.25);
    let mut z = z0;
    while z < z_max {
        let zn = next_node(z, cap).min(z_max);
        ode.advance(&mut rhs, z, &mut y, zn, "z")?;
        z = zn;
        grid.push(z);
        values.push(y[0]);
        deriv.push(y[1]);
    }
    let second: Vec<f64> = grid.iter().zip(&deriv).map(|(&z, &d)| soliton_second(n, z, d)).collect();
    let mut residual = vec![0.0; grid.len()];
    for i in 1..grid.len() - 1 {
        let (za, zb) = (grid[i], grid[i + 1]);
        let h = zb - za;
        let zm = 0.5 * (za + zb);
        let dm = hermite(za, zb, deriv[i], deriv[i + 1], second[i], second[i + 1], zm);
        let integral = h * simpson(1.0 - nm1 * deriv[i] / za, 1.0 - nm1 * dm / zm, 1.0 - nm1 * deriv[i + 1] / zb);
        residual[i + 1] = (deriv[i + 1].atan() - deriv[i].atan() - integral) / h;
    }
    Ok(ProfileSolution {
        kind: ProfileKind::Soliton,
        grid,
        values,
        deriv,
        second,
        residual,
        n_dim: n,
        series_cutoff: z0,
        tol,
    })
}

/// The interior λ-profile `F` for amplitude `A`, sharing a solved `P`.
#[derive(Clone, Debug)]
pub struct FProfile {
    pub a: f64,
    pub gamma: f64,
    pub n: u32,
    pub p: Arc<ProfileSolution>,
}

impl FProfile {
    pub fn new(a: f64, gamma: f64, p: Arc<ProfileSolution>) -> Self {
        FProfile { a, gamma, n: p.n_dim, p }
    }

    fn zbar(&self, z: f64) -> f64 {
        z * (self.gamma - 0.5) / self.a
    }

    pub fn value(&self, z: f64) -> f64 {
        eval_f(self.a, self.gamma, &self.p, z)
    }

    pub fn deriv(&self, z: f64) -> f64 {
        eval_f_deriv(self.a, self.gamma, &self.p, z)
    }

    /// `F''` from the F-ODE: `F'' = g ((γ-1/2)A - (n-1)F'/z)`, `g = 1 + F'^2/A^4`.
    pub fn second(&self, z: f64) -> f64 {
        let zb = self.zbar(z.abs());
        (self.gamma - 0.5) * self.a * soliton_second(self.n, zb, self.p.derivative(zb))
    }

    /// Upper end of the tabulated range in `z`.
    pub fn z_max(&self) -> f64 {
        self.p.z_max() * self.a / (self.gamma - 0.5)
    }
}

pub fn eval_f(a: f64, gamma: f64, p: &ProfileSolution, z: f64) -> f64 {
    let k = gamma - 0.5;
    a.powi(3) / k * p.value(z * k / a)
}

pub fn eval_f_deriv(a: f64, gamma: f64, p: &ProfileSolution, z: f64) -> f64 {
    let k = gamma - 0.5;
    a * a * p.derivative(z * k / a)
}

/// Correction profile with the `F` it was solved against.
#[derive(Clone, Debug)]
pub struct QProfile {
    pub q: ProfileSolution,
    pub f: FProfile,
}

impl QProfile {
    pub fn value(&self, z: f64) -> f64 {
        self.q.value(z)
    }

    pub fn deriv(&self, z: f64) -> f64 {
        self.q.derivative(z)
    }

    pub fn second(&self, z: f64) -> f64 {
        q_second(&self.f, z.abs(), self.q.derivative(z.abs()))
    }
}

fn q_second(f: &FProfile, z: f64, q1: f64) -> f64 {
    let a = f.a;
    let nm1 = f.n as f64 - 1.0;
    let a4 = a.powi(4);
    let f1 = f.deriv(z);
    let g = 1.0 + f1 * f1 / a4;
    if z == 0.0 {
        return -1.0 / (1.0 / (a * a) + nm1);
    }
    let g1 = 2.0 * f1 * f.second(z) / a4;
    let w = q1 / g;
    g1 * w - g * a * a * (1.0 + nm1 * q1 / z)
}

/// Integrates the Q-ODE in the variables `(Q, w = Q'/g)`.
pub fn solve_q(f: &FProfile, z_max: f64, tol: f64) -> Result<QProfile> {
    if !(1e-14..1e-4).contains(&tol) {
        return Err(Error::InvalidParams(format!("profile tol {tol:e} outside (1e-14, 1e-4)")));
    }
    let a = f.a;
    let nm1 = f.n as f64 - 1.0;
    let a2 = a * a;
    let a4 = a2 * a2;
    let coeff = 1.0 / (2.0 * (1.0 / a2 + nm1));
    let z0 = SERIES_CUTOFF;
    let gz = |z: f64| {
        let d = f.deriv(z);
        1.0 + d * d / a4
    };
    let mut grid = vec![0.0, z0];
    let mut values = vec![0.0, -coeff * z0 * z0];
    let mut deriv = vec![0.0, -2.0 * coeff * z0];
    let mut y = [values[1], deriv[1] / gz(z0)];
    let mut ode = Dopri5::new(tol * 1e-2);
    let mut rhs = |z: f64, y: &[f64], d: &mut [f64]| {
        let g = gz(z);
        d[0] = g * y[1];
        d[1] = -a2 * (1.0 + nm1 * g * y[1] / z);
    };
    let mut z = z0;
    while z < z_max {
        let zn = next_node(z, 0.02).min(z_max);
        ode.advance(&mut rhs, z, &mut y, zn, "z")?;
        z = zn;
        grid.push(z);
        values.push(y[0]);
        deriv.push(gz(z) * y[1]);
    }
    let second: Vec<f64> = grid.iter().zip(&deriv).map(|(&z, &d)| q_second(f, z, d)).collect();
    let mut residual = vec![0.0; grid.len()];
    let src = |z: f64, q1: f64| 1.0 + nm1 * q1 / z;
    for i in 1..grid.len() - 1 {
        let (za, zb) = (grid[i], grid[i + 1]);
        let h = zb - za;
        let zm = 0.5 * (za + zb);
        let dm = hermite(za, zb, deriv[i], deriv[i + 1], second[i], second[i + 1], zm);
        let integral = h * simpson(src(za, deriv[i]), src(zm, dm), src(zb, deriv[i + 1]));
        let w_a = deriv[i] / gz(za);
        let w_b = deriv[i + 1] / gz(zb);
        residual[i + 1] = (-(w_b - w_a) / a2 - integral) / h;
    }
    Ok(QProfile {
        q: ProfileSolution {
            kind: ProfileKind::Correction,
            grid,
            values,
            deriv,
            second,
            residual,
            n_dim: f.n,
            series_cutoff: z0,
            tol,
        },
        f: f.clone(),
    })
}

fn cylinder_sq(n: u32) -> f64 {
    2.0 * (n as f64 - 1.0)
}

fn check_open(n: u32, phi: f64, allow_zero: bool) -> Result<f64> {
    let s = cylinder_sq(n) - phi * phi;
    if s <= 0.0 || !s.is_finite() {
        return Err(Error::Domain(format!(
            "phi = {phi} at or beyond the cylinder radius {}",
            cylinder_sq(n).sqrt()
        )));
    }
    if !allow_zero && phi == 0.0 {
        return Err(Error::Domain("phi = 0 is a pole".into()));
    }
    Ok(s)
}

/// `λ̄(φ) = (2n-2-φ^2)^{γ-1/2}` with its first two derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn lambda_bar_jet(n: u32, gamma: f64, phi: f64) -> Result<Jet> {
    let s = check_open(n, phi, true)?;
    let k = gamma - 0.5;
    let v = s.powf(k);
    let d1 = -2.0 * k * phi * s.powf(k - 1.0);
    let d2 = -2.0 * k * s.powf(k - 1.0) + 4.0 * k * (k - 1.0) * phi * phi * s.powf(k - 2.0);
    Ok(Jet { v, d1, d2 })
}

pub fn eval_lambda_bar(n: u32, gamma: f64, phi: f64) -> Result<f64> {
    lambda_bar_jet(n, gamma, phi).map(|j| j.v)
}

/// `A - c λ̄(φ)` for `A = c (2n-2)^{γ-1/2}`, without cancellation near `φ = 0`.
pub fn lambda_bar_drop(n: u32, gamma: f64, c: f64, phi: f64) -> f64 {
    let s0 = cylinder_sq(n);
    let k = gamma - 0.5;
    -c * s0.powf(k) * (k * (-phi * phi / s0).ln_1p()).exp_m1()
}

/// The source term of the ψ equation,
/// `Λ = -[(-λ̄'') - 2(-λ̄')^2/(-λ̄)] (-λ̄)^4/(-λ̄')^2`
/// `  = -(1/(γ-1/2)) (n-1+γφ^2)/φ^2 (2n-2-φ^2)^{3(γ-1/2)}`.
pub fn eval_lambda_cap(n: u32, gamma: f64, phi: f64) -> Result<f64> {
    let s = check_open(n, phi, false)?;
    let k = gamma - 0.5;
    Ok(-((n as f64 - 1.0) + gamma * phi * phi) / (k * phi * phi) * s.powf(3.0 * k))
}

/// `ψ` and its derivatives; `ψ = α s^{m-1} + β s^m (C1 + log φ^2 - log s)`, `m = 3γ-1/2`.
pub fn psi_jet(n: u32, gamma: f64, c1: f64, phi: f64) -> Result<Jet> {
    let s = check_open(n, phi, false)?;
    let m = 3.0 * gamma - 0.5;
    let alpha = (2.0 * gamma + 1.0) / (2.0 * gamma - 1.0);
    let beta = 1.0 / (2.0 * (n as f64 - 1.0) * (2.0 * gamma - 1.0));
    let l = c1 + (phi * phi).ln() - s.ln();
    let l1 = 2.0 / phi + 2.0 * phi / s;
    let l2 = -2.0 / (phi * phi) + 2.0 / s + 4.0 * phi * phi / (s * s);
    let sm = s.powf(m);
    let sm1 = s.powf(m - 1.0);
    let sm2 = s.powf(m - 2.0);
    let sm3 = s.powf(m - 3.0);
    let v = alpha * sm1 + beta * sm * l;
    let d1 = -2.0 * alpha * (m - 1.0) * phi * sm2 + beta * (-2.0 * m * phi * sm1 * l + sm * l1);
    let d2 = -2.0 * alpha * (m - 1.0) * sm2
        + 4.0 * alpha * (m - 1.0) * (m - 2.0) * phi * phi * sm3
        + beta
            * (-2.0 * m * sm1 * l + 4.0 * m * (m - 1.0) * phi * phi * sm2 * l - 2.0 * m * phi * sm1 * l1
                - 2.0 * m * phi * sm1 * l1
                + sm * l2);
    Ok(Jet { v, d1, d2 })
}

pub fn eval_psi(n: u32, gamma: f64, c1: f64, phi: f64) -> Result<f64> {
    psi_jet(n, gamma, c1, phi).map(|j| j.v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u32) -> ProfileSolution {
        solve_grim_reaper_profile(n, if n == 1 { 1.5 } else { 40.0 }, 1e-10).unwrap()
    }

    #[test]
    fn grim_reaper_closed_form() {
        let sol = p(1);
        let mut worst = 0.0f64;
        for i in 0..=2900 {
            let z = 1.45 * i as f64 / 2900.0;
            worst = worst.max((sol.value(z) + z.cos().ln()).abs());
        }
        assert!(worst <= 1e-8, "worst {worst:e}");
        assert!((sol.derivative(1.2) - 1.2f64.tan()).abs() < 1e-7);
    }

    #[test]
    fn origin_behaviour() {
        let sol = p(2);
        let z = 1e-3;
        assert!((sol.value(z) / (z * z) - 0.25).abs() < 1e-6);
        assert_eq!(sol.values[0], 0.0);
        assert_eq!(sol.deriv[0], 0.0);
    }

    #[test]
    fn residual_small() {
        for n in 1..=4 {
            let sol = p(n);
            assert!(sol.max_residual() <= 10.0 * sol.tol, "n={n}: {:e}", sol.max_residual());
        }
    }

    #[test]
    fn convex_and_monotone() {
        let sol = p(3);
        for w in sol.deriv.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(sol.deriv.iter().all(|&d| d >= 0.0));
        for i in 1..sol.grid.len() - 1 {
            let (z0, z1, z2) = (sol.grid[i - 1], sol.grid[i], sol.grid[i + 1]);
            let s0 = (sol.values[i] - sol.values[i - 1]) / (z1 - z0);
            let s1 = (sol.values[i + 1] - sol.values[i]) / (z2 - z1);
            assert!(s1 - s0 >= -1e-10, "convexity at {z1}");
        }
    }

    #[test]
    fn tail_uses_asymptote() {
        let sol = solve_grim_reaper_profile(2, 10.0, 1e-10).unwrap();
        let z: f64 = 30.0;
        assert_eq!(sol.value(z), z * z / 2.0 - z.ln());
    }

    #[test]
    fn f_examples() {
        let p1 = Arc::new(p(1));
        let f = FProfile::new(1.0, 1.5, p1);
        assert_eq!(f.value(0.0), 0.0);
        assert!((f.value(1.0) - 0.615626470386014).abs() < 1e-9);
        let p2 = Arc::new(p(2));
        let f = FProfile::new(1.3, 1.0, p2);
        let z = 1e-2;
        let lead = 0.5 * 1.3 * z * z / 4.0;
        assert!((f.value(z) / lead - 1.0).abs() < 1e-3);
    }

    #[test]
    fn f_second_matches_difference_quotient() {
        let f = FProfile::new(0.8, 1.0, Arc::new(p(2)));
        for &z in &[0.3, 2.0, 9.0] {
            let h = 1e-4;
            let fd = (f.deriv(z + h) - f.deriv(z - h)) / (2.0 * h);
            assert!((fd - f.second(z)).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn q_series_and_sign() {
        let f = FProfile::new(1.0, 1.0, Arc::new(p(2)));
        let q = solve_q(&f, 30.0, 1e-10).unwrap();
        assert_eq!(q.value(0.0), 0.0);
        assert_eq!(q.deriv(0.0), 0.0);
        let z = 1e-3;
        assert!((q.value(z) / (z * z) + 0.25).abs() < 1e-5);
        assert!(q.q.values.iter().all(|&v| v <= 0.0));
        assert!(q.q.deriv.iter().all(|&v| v <= 0.0));
        assert!(q.q.max_residual() <= 1e-9, "{:e}", q.q.max_residual());
    }

    #[test]
    fn lambda_bar_examples() {
        assert!((eval_lambda_bar(2, 1.0, 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(eval_lambda_bar(2, 1.0, 2f64.sqrt()).is_err());
        assert!(eval_lambda_bar(2, 1.0, 2f64.sqrt() - 1e-12).unwrap() < 1e-5);
        let j = lambda_bar_jet(2, 1.0, 1.0).unwrap();
        let r = (1.0 / 1.0 - 0.5) * j.d1 + 0.5 * j.v;
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn lambda_bar_drop_matches_direct() {
        let c = 0.7;
        let a = c * 2f64.powf(0.5);
        for &phi in &[0.3, 0.9, 1.3] {
            let direct = a - c * eval_lambda_bar(2, 1.0, phi).unwrap();
            assert!((lambda_bar_drop(2, 1.0, c, phi) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn lambda_cap_examples() {
        assert!((eval_lambda_cap(2, 1.0, 1.0).unwrap() + 4.0).abs() < 1e-14);
        assert!(eval_lambda_cap(2, 1.0, 0.0).is_err());
        for i in 1..100 {
            let phi = 2f64.sqrt() * i as f64 / 100.0;
            assert!(eval_lambda_cap(2, 1.0, phi).unwrap() < 0.0);
        }
    }

    #[test]
    fn psi_derivatives_match_differences() {
        for &(n, g, phi) in &[(2u32, 1.0, 0.7), (3, 1.5, 0.4), (2, 0.75, 1.1)] {
            let h = 1e-5;
            let j = psi_jet(n, g, 0.3, phi).unwrap();
            let jp = psi_jet(n, g, 0.3, phi + h).unwrap();
            let jm = psi_jet(n, g, 0.3, phi - h).unwrap();
            assert!(((jp.v - jm.v) / (2.0 * h) - j.d1).abs() < 1e-6 * (1.0 + j.d1.abs()));
            assert!(((jp.d1 - jm.d1) / (2.0 * h) - j.d2).abs() < 1e-5 * (1.0 + j.d2.abs()));
        }
    }

    #[test]
    fn psi_c1_shift() {
        let phi = 0.8;
        let d = eval_psi(2, 1.0, 1.0, phi).unwrap() - eval_psi(2, 1.0, 0.0, phi).unwrap();
        let s: f64 = 2.0 - phi * phi;
        assert!((d - s.powf(2.5) / 2.0).abs() < 1e-14);
    }
}
