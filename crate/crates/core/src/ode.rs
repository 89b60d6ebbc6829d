//! Dormand–Prince 5(4) with local extrapolation and a PI-free step controller.
//! Only what the profile equations and the scalar radial law need.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (fifth minus embedded fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub max_steps: usize,
    /// Step proposal carried between calls to [`Dopri5::advance`].
    pub h: f64,
    pub steps: usize,
    pub rejected: usize,
}

impl Dopri5 {
    pub fn new(tol: f64) -> Self {
        Dopri5 {
            rtol: tol,
            atol: tol,
            h_min: 1e-14,
            max_steps: 1_000_000,
            h: 0.0,
            steps: 0,
            rejected: 0,
        }
    }

    /// Integrates `y' = f(t, y)` from `t` to `t_end`, overwriting `y`.
    pub fn advance<F>(&mut self, f: &mut F, t: f64, y: &mut [f64], t_end: f64, var: &'static str) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let dim = y.len();
        let mut k = vec![vec![0.0; dim]; 7];
        let mut tmp = vec![0.0; dim];
        let mut y5 = vec![0.0; dim];
        let mut t = t;
        let span = t_end - t;
        if span <= 0.0 {
            return Ok(());
        }
        if self.h <= 0.0 {
            self.h = span.min(1e-3 * span.max(t.abs()).max(1e-6));
        }
        f(t, y, &mut k[0]);
        let mut local_steps = 0usize;
        while t < t_end {
            let last = self.h >= t_end - t;
            let h = if last { t_end - t } else { self.h };
            if h < self.h_min * t.abs().max(1.0) {
                return Err(Error::Integrator {
                    var,
                    at: t,
                    reason: format!("step size underflow (h = {h:.3e})"),
                });
            }
            for i in 0..dim {
                tmp[i] = y[i] + h * A21 * k[0][i];
            }
            f(t + C2 * h, &tmp, &mut k[1]);
            for i in 0..dim {
                tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
            }
            f(t + C3 * h, &tmp, &mut k[2]);
            for i in 0..dim {
                tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
            }
            f(t + C4 * h, &tmp, &mut k[3]);
            for i in 0..dim {
                tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
            }
            f(t + C5 * h, &tmp, &mut k[4]);
            for i in 0..dim {
                tmp[i] = y[i]
                    + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
            }
            f(t + h, &tmp, &mut k[5]);
            for i in 0..dim {
                y5[i] = y[i]
                    + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
            }
            f(t + h, &y5, &mut k[6]);
            let mut err = 0.0f64;
            for i in 0..dim {
                let e = h
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                self.h = 0.25 * h;
                self.rejected += 1;
                continue;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if last { t_end } else { t + h };
                y.copy_from_slice(&y5);
                k.swap(0, 6);
                self.steps += 1;
                local_steps += 1;
                if local_steps > self.max_steps {
                    return Err(Error::Integrator {
                        var,
                        at: t,
                        reason: "step budget exhausted".into(),
                    });
                }
                // Keep the unclipped proposal when the last step was shortened.
                let proposal = h * fac;
                self.h = if last { self.h.max(proposal) } else { proposal };
            } else {
                self.rejected += 1;
                self.h = h * fac.min(1.0);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut ode = Dopri5::new(1e-10);
        let mut y = [1.0];
        ode.advance(&mut |_t, y: &[f64], d: &mut [f64]| d[0] = -y[0], 0.0, &mut y, 3.0, "t")
            .unwrap();
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_chained_calls() {
        let mut ode = Dopri5::new(1e-11);
        let mut y = [0.0, 1.0];
        let mut f = |_t: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        let mut t = 0.0;
        for _ in 0..100 {
            ode.advance(&mut f, t, &mut y, t + 0.1, "t").unwrap();
            t += 0.1;
        }
        assert!((y[0] - 10.0f64.sin()).abs() < 1e-8);
    }
}
