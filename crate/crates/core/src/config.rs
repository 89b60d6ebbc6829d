//! TOML run configuration.
//!
//! Every section is optional; missing keys take the baseline values. Unset
//! parameter fields are filled by [`FlowParams::matched`] from `n`, `gamma`
//! and `a_tilde`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::FitWindow;
use crate::barriers::BarrierOptions;
use crate::error::{Error, Result};
use crate::params::{validate, FlowParams};
use crate::solver::SolverOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub n: u32,
    pub gamma: f64,
    pub a_tilde: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_mid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau0: Option<f64>,
    /// Polynomial coefficients of `C(τ)`, constant term first.
    pub c_of_tau: Vec<f64>,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            n: 2,
            gamma: 1.0,
            a_tilde: 1.0,
            c_plus: None,
            c_minus: None,
            c_mid: None,
            e_plus: None,
            e_minus: None,
            b_plus: None,
            b_minus: None,
            r1: None,
            r2: None,
            tau0: None,
            c_of_tau: Vec::new(),
        }
    }
}

impl ParamsConfig {
    pub fn build(&self) -> FlowParams {
        let mut p = FlowParams::matched(self.n, self.gamma, self.a_tilde);
        let set = |dst: &mut f64, src: Option<f64>| {
            if let Some(v) = src {
                *dst = v;
            }
        };
        set(&mut p.c_plus, self.c_plus);
        set(&mut p.c_minus, self.c_minus);
        set(&mut p.c_mid, self.c_mid);
        set(&mut p.e_plus, self.e_plus);
        set(&mut p.e_minus, self.e_minus);
        set(&mut p.b_plus, self.b_plus);
        set(&mut p.b_minus, self.b_minus);
        set(&mut p.r1, self.r1);
        set(&mut p.r2, self.r2);
        p.tau0 = self.tau0;
        p.c_of_tau = self.c_of_tau.clone();
        p
    }
}

/// Lengths and sizes of the standard runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Default length of an `evolve` run.
    pub tau_len: f64,
    /// Length of each exponent-sweep run.
    pub sweep_len: f64,
    pub sweep_gammas: Vec<f64>,
    /// Half-width of the tip window of the soliton error.
    pub z_window: f64,
    /// Seed of the sampled identity checks.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tau_len: 5.0,
            sweep_len: 6.0,
            sweep_gammas: vec![0.75, 1.0, 1.5],
            z_window: 2.0,
            seed: 20240611,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub params: ParamsConfig,
    pub barriers: BarrierOptions,
    pub solver: SolverOptions,
    pub fit: FitWindow,
    pub run: RunConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parameters after validation.
    pub fn params(&self) -> Result<FlowParams> {
        let p = self.params.build();
        validate(&p).into_result()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        let s = &self.solver;
        if s.intervals < 8 || !(s.control.rtol > 0.0) || !(s.snapshot_every > 0.0) {
            return Err(Error::Config(format!(
                "solver needs intervals >= 8, rtol > 0, snapshot_every > 0 (got {}, {}, {})",
                s.intervals, s.control.rtol, s.snapshot_every
            )));
        }
        let f = &self.fit;
        if !(f.trim_fraction >= 0.0 && f.trim_fraction < f.last_fraction && f.last_fraction <= 1.0) || f.samples < 8 {
            return Err(Error::Config(format!("bad fit window {f:?}")));
        }
        let r = &self.run;
        if !(r.tau_len > 0.0 && r.sweep_len > 0.0 && r.z_window > 0.0) {
            return Err(Error::Config(format!("bad run lengths {r:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_baseline() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.params().unwrap(), FlowParams::baseline());
    }

    #[test]
    fn round_trip() {
        let mut c = Config::default();
        c.params.gamma = 1.5;
        c.params.c_of_tau = vec![0.0, 0.1];
        c.solver.control.rtol = 1e-8;
        c.run.sweep_gammas = vec![1.0];
        let back = Config::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_sections() {
        let c = Config::from_toml("[params]\ngamma = 0.75\n[solver.control]\nrtol = 1e-7\n").unwrap();
        assert_eq!(c.params.gamma, 0.75);
        assert_eq!(c.params.n, 2);
        assert_eq!(c.solver.control.rtol, 1e-7);
        assert_eq!(c.solver.control.h_max, 5e-3);
        assert_eq!(c.solver.intervals, 2000);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(Config::from_toml("[params]\ngama = 1.0\n"), Err(Error::Config(_))));
        let c = Config::from_toml("[params]\ngamma = 0.4\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides_apply() {
        let c = Config::from_toml("[params]\nc_plus = 0.5\nr1 = 30.0\ntau0 = 12.0\n").unwrap();
        let p = c.params.build();
        assert_eq!(p.c_plus, 0.5);
        assert_eq!(p.r1, 30.0);
        assert_eq!(p.tau0, Some(12.0));
        assert_eq!(p.c_minus, FlowParams::baseline().c_minus);
    }
}
