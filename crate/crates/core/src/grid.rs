//! Node placement for the radial variable.
//!
//! Nodes are uniform in `ξ ∝ asinh(φ/a) + μ artanh(φ/r)` where `r` is the
//! cylinder radius: geometric spacing above the tip scale `a`, and clustering
//! toward the cylinder where the solution behaves like a power of `r^2 - φ^2`.
//! The map is odd, so the mirror of node 1 is exactly `-φ_1` and the symmetry
//! condition at `φ = 0` is a plain ghost value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of intervals; nodes are `0..=intervals`, the last carries Dirichlet data.
    pub intervals: usize,
    pub phi_b: f64,
    pub cylinder: f64,
    pub tip_scale: f64,
    pub boundary_weight: f64,
}

/// Three-point weights for `f_φ = a_m f_{i-1} + a_p f_{i+1}` and
/// `f_φφ = b_m f_{i-1} + b_0 f_i + b_p f_{i+1}`.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub a_m: f64,
    pub a_p: f64,
    pub b_m: f64,
    pub b_0: f64,
    pub b_p: f64,
}

#[derive(Clone, Debug)]
pub struct MappedGrid {
    pub spec: GridSpec,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
    pub dxi: f64,
    stencils: Vec<Stencil>,
    /// `f_φφ(0) = tip_weight (f_1 - f_0)` from the even ghost value.
    pub tip_weight: f64,
}

impl MappedGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let GridSpec { intervals, phi_b, cylinder, tip_scale, boundary_weight } = spec.clone();
        if intervals < 4 || !(phi_b > 0.0 && phi_b < cylinder) || !(tip_scale > 0.0) || boundary_weight < 0.0 {
            return Err(Error::InvalidParams(format!("bad grid spec {spec:?}")));
        }
        let a = tip_scale;
        let r = cylinder;
        let mu = boundary_weight;
        let raw = |p: f64| (p / a).asinh() + mu * (p / r).atanh();
        let raw1 = |p: f64| 1.0 / (p * p + a * a).sqrt() + mu * r / (r * r - p * p);
        let raw2 = |p: f64| -p / (p * p + a * a).powf(1.5) + mu * 2.0 * r * p / (r * r - p * p).powi(2);
        let xi_b = raw(phi_b);
        let dxi = 1.0 / intervals as f64;
        let mut phi = vec![0.0; intervals + 1];
        phi[intervals] = phi_b;
        for i in 1..intervals {
            let target = xi_b * (i as f64 / intervals as f64);
            let (mut lo, mut hi) = (phi[i - 1], phi_b);
            for _ in 0..2000 {
                if hi - lo <= 2.0 * f64::EPSILON * hi {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if raw(mid) > target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let x = 0.5 * (lo + hi);
            phi[i] = x;
        }
        let dphi: Vec<f64> = phi.iter().map(|&p| xi_b / raw1(p)).collect();
        let d2phi: Vec<f64> = phi.iter().map(|&p| -xi_b * xi_b * raw2(p) / raw1(p).powi(3)).collect();
        for w in phi.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParams("grid map lost monotonicity; tip scale too small".into()));
            }
        }
        let stencils = (0..=intervals)
            .map(|i| {
                let d1 = dphi[i];
                let d2 = d2phi[i];
                let a_p = 1.0 / (2.0 * dxi * d1);
                let c = 1.0 / (dxi * dxi * d1 * d1);
                let e = d2 / (2.0 * dxi * d1.powi(3));
                Stencil { a_m: -a_p, a_p, b_m: c + e, b_0: -2.0 * c, b_p: c - e }
            })
            .collect();
        let tip_weight = 2.0 / (dxi * dxi * dphi[0] * dphi[0]);
        Ok(MappedGrid { spec, phi, dphi, d2phi, dxi, stencils, tip_weight })
    }

    pub fn intervals(&self) -> usize {
        self.spec.intervals
    }

    pub fn stencil(&self, i: usize) -> Stencil {
        self.stencils[i]
    }

    /// Largest node spacing.
    pub fn max_spacing(&self) -> f64 {
        self.phi.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// `φ_b / intervals`, the spacing of a uniform grid with the same node count.
    pub fn nominal_spacing(&self) -> f64 {
        self.spec.phi_b / self.spec.intervals as f64
    }

    /// Coarsened grid keeping every `k`-th node (nested by construction).
    pub fn coarsen(&self, k: usize) -> Result<Self> {
        if self.spec.intervals % k != 0 {
            return Err(Error::InvalidParams("coarsening factor must divide the interval count".into()));
        }
        MappedGrid::new(GridSpec { intervals: self.spec.intervals / k, ..self.spec.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> GridSpec {
        GridSpec {
            intervals: n,
            phi_b: 2f64.sqrt() - 0.01,
            cylinder: 2f64.sqrt(),
            tip_scale: 1e-8,
            boundary_weight: 1.0,
        }
    }

    #[test]
    fn nodes_monotone_and_pinned() {
        let g = MappedGrid::new(spec(400)).unwrap();
        assert_eq!(g.phi[0], 0.0);
        assert_eq!(*g.phi.last().unwrap(), 2f64.sqrt() - 0.01);
        assert!(g.phi.windows(2).all(|w| w[1] > w[0]));
        assert!(g.d2phi[0].abs() < 1e-30);
    }

    #[test]
    fn stencils_resolve_quadratics() {
        let g = MappedGrid::new(GridSpec { tip_scale: 1e-4, ..spec(2000) }).unwrap();
        for &i in &[3usize, 500, 1500, 1990] {
            let s = g.stencil(i);
            let f = |p: f64| 0.3 + 2.0 * p - 1.5 * p * p;
            let (fm, f0, fp) = (f(g.phi[i - 1]), f(g.phi[i]), f(g.phi[i + 1]));
            let d1 = s.a_m * fm + s.a_p * fp;
            let d2 = s.b_m * fm + s.b_0 * f0 + s.b_p * fp;
            let p = g.phi[i];
            assert!((d1 - (2.0 - 3.0 * p)).abs() < 1e-3, "i={i} d1={d1}");
            assert!((d2 + 3.0).abs() < 1e-2, "i={i} d2={d2}");
        }
    }

    #[test]
    fn coarsening_is_nested() {
        let g = MappedGrid::new(spec(400)).unwrap();
        let c = g.coarsen(4).unwrap();
        for (j, &p) in c.phi.iter().enumerate() {
            assert!((p - g.phi[4 * j]).abs() <= 1e-14 * p.max(1e-300));
        }
    }
}
