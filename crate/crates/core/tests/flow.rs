use std::sync::Arc;

use tipflow::barriers::{build_barriers, BarrierOptions};
use tipflow::exec::ExecPolicy;
use tipflow::grid::{GridSpec, MappedGrid};
use tipflow::params::FlowParams;
use tipflow::solver::{
    build_initial_data, evolve, evolve_physical, run_grid, to_physical, to_rescaled, Mol, PhysicalMol, Ros2, SolverOptions,
    StepControl,
};

/// Radial heat equation with a time-dependent drift and linear decay.
struct Heat {
    grid: MappedGrid,
}

impl Mol for Heat {
    fn grid(&self) -> &MappedGrid {
        &self.grid
    }
    fn ell(&self) -> f64 {
        -1.0
    }
    fn n_dim(&self) -> u32 {
        2
    }
    fn scale(&self, _t: f64) -> f64 {
        1.0
    }
    fn boundary(&self, _t: f64) -> f64 {
        1.0
    }
    fn flux(&self, t: f64, x: f64, _v: f64, p: f64, q: f64) -> [f64; 4] {
        let k = 1.0 / x + t.sin();
        [q + k * p, k, 1.0, 0.0]
    }
    fn admissible(&self, v: f64) -> bool {
        v.is_finite()
    }
}

fn heat() -> Heat {
    let grid = MappedGrid::new(GridSpec { intervals: 40, phi_b: 1.0, cylinder: 2.0, tip_scale: 0.5, boundary_weight: 1.0 }).unwrap();
    Heat { grid }
}

fn fixed_steps(m: &Heat, h: f64, t_end: f64) -> Vec<f64> {
    let nn = m.grid.intervals();
    let mut y: Vec<f64> = (0..nn).map(|i| 0.3 * m.grid.phi[i].powi(2)).collect();
    y[0] = 2.0;
    let mut ros = Ros2::new(StepControl::default(), h);
    let steps = (t_end / h).round() as usize;
    for k in 0..steps {
        y = ros.trial(m, k as f64 * h, &y, h).unwrap().y;
    }
    // nodal values
    (0..nn).map(|i| if i == 0 { y[0] } else { y[0] + y[i] }).collect()
}

#[test]
fn rosenbrock_is_second_order_in_time() {
    let m = heat();
    let t_end = 0.4;
    let reference = fixed_steps(&m, t_end / 3200.0, t_end);
    let err = |k: usize| {
        let y = fixed_steps(&m, t_end / k as f64, t_end);
        y.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let e: Vec<f64> = [20, 40, 80].into_iter().map(err).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.3, "observed order {order} from {e:?}");
    }
}

#[test]
fn physical_and_rescaled_flows_agree() {
    let p = FlowParams::baseline();
    let set = build_barriers(&p, &BarrierOptions::default(), ExecPolicy::Parallel).unwrap();
    let tau0 = set.tau0();
    let tau1 = tau0 + 0.5;
    let opts = SolverOptions { intervals: 600, ..SolverOptions::default() };
    let grid = run_grid(&set.params, &opts, tau1).unwrap();
    let start = build_initial_data(&set, Arc::clone(&grid), tau0).unwrap();
    let boundary = start.boundary;

    let t_vanish = 1.0;
    let ps = to_physical(&start, p.gamma, t_vanish);
    let back = to_rescaled(&ps, p.gamma, t_vanish, boundary);
    for (a, b) in start.lambda().iter().zip(back.lambda()) {
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    let traj = evolve(start, &set.params, tau1, None, &opts, ExecPolicy::Parallel).unwrap();
    let resc = traj.final_state();

    let mol = PhysicalMol { grid, n: p.n, gamma: p.gamma, t_vanish, y_b: -1.0 / boundary };
    let ctrl = StepControl { rtol: 1e-7, h_max: 1e-2 * (-tau0).exp(), h_min: 1e-30, h_start: 1e-10 * (-tau0).exp() };
    let t1 = t_vanish - (-tau1).exp();
    let (end, _) = evolve_physical(&mol, ps, t1, ctrl, 1e-4 * (-tau0).exp()).unwrap();
    let phys = to_rescaled(&end, p.gamma, t_vanish, boundary);

    assert!((phys.tau - tau1).abs() < 1e-9);
    let (a, b) = (resc.lambda(), phys.lambda());
    let tip = (a[0] - b[0]).abs() / a[0].abs();
    assert!(tip < 1e-4, "tip values {} vs {}", a[0], b[0]);
    let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs() / x.abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "largest relative gap {worst:e}");
}
