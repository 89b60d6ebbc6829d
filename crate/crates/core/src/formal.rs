//! Matched formal solutions, in the `y` picture and in `λ = -1/y`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{amplitude, FlowParams};
use crate::profiles::{eval_lambda_bar, ProfileSolution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Picture {
    Y,
    Lambda,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Interior,
    Exterior,
}

/// Exterior constant `C₁ = Ã [2(n-1)]^{γ-1/2}` fixed by matching at `φ = 0`.
pub fn matching_constant(p: &FlowParams) -> f64 {
    p.a_tilde * (2.0 * (p.n as f64 - 1.0)).powf(p.gamma - 0.5)
}

fn check_profile(p: &FlowParams, profile: &ProfileSolution) -> Result<()> {
    if profile.n_dim != p.n {
        return Err(Error::InvalidParams(format!(
            "profile solved for n = {} but params have n = {}",
            profile.n_dim, p.n
        )));
    }
    Ok(())
}

/// Interior formal solution at `(z, τ)`; even in `z`.
pub fn formal_interior(picture: Picture, p: &FlowParams, profile: &ProfileSolution, z: f64, tau: f64) -> Result<f64> {
    check_profile(p, profile)?;
    let s = (-2.0 * p.gamma * tau).exp();
    let k = p.gamma - 0.5;
    match picture {
        Picture::Y => {
            let at = p.a_tilde;
            Ok(at + s * p.c_of(tau) + s * profile.value(k * at * z) / (k * at))
        }
        Picture::Lambda => {
            let a = amplitude(p.n, p.gamma, p.c_mid);
            Ok(-a + s * a.powi(3) / k * profile.value(k * z / a))
        }
    }
}

/// Exterior formal solution; τ-independent.
pub fn formal_exterior(picture: Picture, p: &FlowParams, phi: f64) -> Result<f64> {
    let r2 = 2.0 * (p.n as f64 - 1.0);
    let s = r2 - phi * phi;
    match picture {
        Picture::Y => {
            if !(s > 0.0) {
                return Err(Error::Domain(format!("phi = {phi} at or beyond the cylinder radius")));
            }
            Ok(matching_constant(p) * s.powf(0.5 - p.gamma))
        }
        Picture::Lambda => {
            // the cylinder radius itself, up to rounding in φ^2
            if s.abs() <= 8.0 * f64::EPSILON * r2 {
                return Ok(0.0);
            }
            Ok(-p.c_mid * eval_lambda_bar(p.n, p.gamma, phi)?)
        }
    }
}

/// `|interior(z = R) - exterior(φ = R e^{-γτ})|` in the chosen picture.
pub fn matching_residual(picture: Picture, p: &FlowParams, profile: &ProfileSolution, r: f64, tau: f64) -> Result<f64> {
    let phi = r * (-p.gamma * tau).exp();
    Ok((formal_interior(picture, p, profile, r, tau)? - formal_exterior(picture, p, phi)?).abs())
}

/// A formal piece bound to its data, for sampling.
#[derive(Clone, Debug)]
pub struct FormalSolution {
    pub picture: Picture,
    pub region: Region,
    pub params: FlowParams,
    pub profile: Option<Arc<ProfileSolution>>,
}

impl FormalSolution {
    /// Interior pieces take `z`, exterior pieces take `φ`.
    pub fn eval(&self, x: f64, tau: f64) -> Result<f64> {
        match self.region {
            Region::Interior => {
                let prof = self
                    .profile
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParams("interior formal solution needs a profile".into()))?;
                formal_interior(self.picture, &self.params, prof, x.abs(), tau)
            }
            Region::Exterior => formal_exterior(self.picture, &self.params, x.abs()),
        }
    }
}
