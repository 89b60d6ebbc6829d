use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use tipflow::analysis::{check_ratio_principle, fit_blowup_exponent, fit_exterior_rate, soliton_convergence, BlowupFit};
use tipflow::barriers::{
    build_barriers, certify_barriers, exterior_grid, patched_grid, uniform, BarrierSet, EXTERIOR_GAP,
};
use tipflow::config::Config;
use tipflow::exec;
use tipflow::formal::{formal_exterior, formal_interior, matching_residual, Picture};
use tipflow::io::{RunManifest, Table};
use tipflow::operators::{residual_f_phi, residual_t_z};
use tipflow::params::{amplitude, soliton_for};
use tipflow::profiles::{solve_grim_reaper_profile, solve_q, FProfile, ProfileSolution};
use tipflow::solver::{build_initial_data, evolve, run_grid, tol_grid, EvolutionTrajectory, Snapshot, StepDiag};
use tipflow::verify::{
    barrier_set, params_for_gamma, run_from, Verdict, Verifier, CERT_LEN, FIT_LAST_FRACTION, ORACLE_TOL, RATE_REL_TOL,
    RATIO_TOL,
};

use crate::output::OutDir;
use crate::{
    AnalyzeArgs, BarriersArgs, Candidate, Cli, Command, EvolveArgs, FormalArgs, Global, PictureArg, ProfileArgs,
    RegionArg, ResidualArgs, SweepArgs, VerifyArgs, Which,
};

/// 2 for configuration and parameter errors, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<tipflow::Error>() {
        Some(tipflow::Error::Config(_)) | Some(tipflow::Error::InvalidParams(_)) => 2,
        _ => 1,
    }
}

/// Runs one subcommand; `Ok(false)` means a gate failed.
pub fn run(cli: &Cli) -> Result<bool> {
    let g = &cli.global;
    match &cli.command {
        Command::Profile(a) => profile(g, a),
        Command::Formal(a) => formal(g, a),
        Command::Residual(a) => residual(g, a),
        Command::Barriers(a) => barriers(g, a),
        Command::Evolve(a) => evolve_cmd(g, a),
        Command::Analyze(a) => analyze(g, a),
        Command::Sweep(a) => sweep(g, a),
        Command::VerifyAll(a) => verify_all(g, a),
    }
}

fn validated(g: &Global) -> Result<Config> {
    let cfg = g.config()?;
    cfg.validate()?;
    Ok(cfg)
}

fn verdict(id: u32, name: &str, pass: bool, measured: String, tolerance: String, detail: String) -> Verdict {
    Verdict { detail, ..Verdict::new(id, name, pass, measured, tolerance) }
}

fn profile_table(prof: &ProfileSolution, name: &str, extra: Option<(&str, &dyn Fn(f64) -> f64)>) -> Table {
    let d = format!("d{name}");
    let mut cols = vec![("z", "1"), (name, "1"), (d.as_str(), "1"), ("residual", "1")];
    if let Some((c, _)) = extra {
        cols.push((c, "1"));
    }
    let mut t = Table::new(&cols);
    for i in 0..prof.grid.len() {
        let z = prof.grid[i];
        let mut row = vec![z, prof.values[i], prof.deriv[i], prof.residual[i]];
        if let Some((_, f)) = extra {
            row.push(f(z));
        }
        t.push(row);
    }
    t
}

fn profile(g: &Global, a: &ProfileArgs) -> Result<bool> {
    let cfg = g.config()?;
    let mut out = OutDir::create(&g.out_dir, "profile", &cfg)?;
    let n = cfg.params.n;
    match a.which {
        Which::P => {
            let prof = match a.z_max {
                Some(z) => solve_grim_reaper_profile(n, z, a.tol)?,
                None if n == 1 => solve_grim_reaper_profile(1, 1.45, a.tol)?,
                None => (*soliton_for(&cfg.params.build(), a.tol)?).clone(),
            };
            if n == 1 {
                let exact = |z: f64| -z.cos().ln();
                out.table("profile.csv", &profile_table(&prof, "P", Some(("exact", &exact))))?;
                let err = prof.grid.iter().zip(&prof.values).map(|(&z, &v)| (v - exact(z)).abs()).fold(0.0, f64::max);
                out.value("max_error", err);
                out.verdict(verdict(
                    1,
                    "grim reaper oracle",
                    err <= ORACLE_TOL,
                    format!("max|P + log cos z| = {err:.3e}"),
                    format!("{ORACLE_TOL:e}"),
                    format!("{} nodes on [0, {}]", prof.grid.len(), prof.z_max()),
                ));
            } else {
                let m = 2.0 * (n as f64 - 1.0);
                // undefined at the origin
                let asym = move |z: f64| if z > 0.0 { z * z / m - z.ln() } else { f64::NAN };
                out.table("profile.csv", &profile_table(&prof, "P", Some(("asymptote", &asym))))?;
                let bad = prof.second.iter().filter(|&&s| s < 0.0).count()
                    + prof.deriv.windows(2).filter(|w| w[1] < w[0]).count();
                out.value("max_residual", prof.max_residual());
                out.verdict(verdict(
                    0,
                    "profile convexity",
                    bad == 0,
                    format!("{bad} non-convex nodes"),
                    "0".into(),
                    format!("n = {n}, {} nodes on [0, {:.3}]", prof.grid.len(), prof.z_max()),
                ));
            }
        }
        Which::Q => {
            cfg.validate()?;
            let p = cfg.params()?;
            let f = FProfile::new(amplitude(p.n, p.gamma, p.c_mid), p.gamma, soliton_for(&p, a.tol)?);
            let q = solve_q(&f, a.z_max.unwrap_or(1.05 * p.r1), a.tol)?;
            out.table("profile_q.csv", &profile_table(&q.q, "Q", None))?;
            let bad = q.q.values.iter().chain(&q.q.deriv).filter(|&&v| v > 0.0).count();
            out.value("max_residual", q.q.max_residual());
            out.verdict(verdict(
                0,
                "correction sign",
                bad == 0,
                format!("{bad} positive values of Q or Q'"),
                "0".into(),
                format!("A = {:.6}, {} nodes", f.a, q.q.grid.len()),
            ));
        }
    }
    out.finish()
}

fn formal(g: &Global, a: &FormalArgs) -> Result<bool> {
    let cfg = validated(g)?;
    let p = cfg.params()?;
    let mut out = OutDir::create(&g.out_dir, "formal", &cfg)?;
    let pic = match a.picture {
        PictureArg::Y => Picture::Y,
        PictureArg::Lambda => Picture::Lambda,
    };
    let w = (-p.gamma * a.tau).exp();
    let mut t = Table::new(&[("z", "1"), ("phi", "1"), ("value", "1")]);
    match a.region {
        RegionArg::Interior => {
            let prof = soliton_for(&p, cfg.barriers.profile_tol)?;
            for z in uniform(0.0, a.x_max.unwrap_or(p.r1), a.points) {
                t.push(vec![z, z * w, formal_interior(pic, &p, &prof, z, a.tau)?]);
            }
            let rc = (p.r1 * p.r2).sqrt();
            out.value("matching_residual", matching_residual(pic, &p, &prof, rc, a.tau)?);
        }
        RegionArg::Exterior => {
            for phi in uniform(0.0, a.x_max.unwrap_or(p.cylinder_radius() - EXTERIOR_GAP), a.points) {
                t.push(vec![phi / w, phi, formal_exterior(pic, &p, phi)?]);
            }
        }
    }
    out.value("tau", a.tau);
    out.table("formal.csv", &t)?;
    out.finish()
}

fn residual(g: &Global, a: &ResidualArgs) -> Result<bool> {
    let cfg = validated(g)?;
    let set = build_barriers(&cfg.params()?, &cfg.barriers, g.policy())?;
    let p = &set.params;
    let mut out = OutDir::create(&g.out_dir, "residual", &cfg)?;
    let (plus, interior) = match a.candidate {
        Candidate::InteriorPlus => (true, true),
        Candidate::InteriorMinus => (false, true),
        Candidate::ExteriorPlus => (true, false),
        Candidate::ExteriorMinus => (false, false),
    };
    let b = if plus { &set.plus } else { &set.minus };
    let (tau, r, x) = if interior {
        let tau = a.tau.unwrap_or(set.taus.tau1);
        (tau, residual_t_z(&b.interior, &uniform(0.0, p.r1, a.points), tau, p.gamma, p.n)?, "z")
    } else {
        let tau = a.tau.unwrap_or(set.taus.tau2);
        let lo = p.r2 * (-p.gamma * tau).exp();
        let grid = exterior_grid(lo, p.cylinder_radius() - EXTERIOR_GAP, a.points);
        (tau, residual_f_phi(&b.exterior, &grid, tau, p.gamma, p.n)?, "phi")
    };
    let mut t = Table::new(&[(x, "1"), ("residual", "1"), ("scaled", "1")]);
    for i in 0..r.grid.len() {
        t.push(vec![r.grid[i], r.values[i], r.scaled[i]]);
    }
    out.table("residual.csv", &t)?;
    let sign = if plus { 1.0 } else { -1.0 };
    let worst = r.scaled.iter().map(|v| sign * v).fold(f64::INFINITY, f64::min);
    out.value("tau", tau);
    out.value("least_signed_scaled_residual", worst);
    out.verdict(verdict(
        0,
        "residual sign",
        worst >= 0.0,
        format!("least signed scaled residual {worst:.3e}"),
        ">= 0".into(),
        format!("{:?} at tau = {tau:.4}", a.candidate),
    ));
    out.finish()
}

fn barriers(g: &Global, a: &BarriersArgs) -> Result<bool> {
    let cfg = validated(g)?;
    let policy = g.policy();
    let set = build_barriers(&cfg.params()?, &cfg.barriers, policy)?;
    let cert = certify_barriers(&set, cfg.barriers.grid_points, CERT_LEN, policy);
    let mut out = OutDir::create(&g.out_dir, "barriers", &cfg)?;
    out.manifest.derived = Some(set.derived.clone());
    out.text("certificate.txt", &cert.to_string())?;
    out.text("certificate.toml", &toml::to_string(&cert)?)?;
    let taus = if a.tau.is_empty() { vec![set.tau0()] } else { a.tau.clone() };
    for (k, &tau) in taus.iter().enumerate() {
        out.table(&format!("barriers_{k}.csv"), &sandwich_table(&set, tau, a.points))?;
    }
    let t = &cert.taus;
    for (k, v) in [("tau1", t.tau1), ("tau2", t.tau2), ("tau3", t.tau3), ("tau4", t.tau4), ("tau5", t.tau5), ("tau0", t.tau0)] {
        out.value(k, v);
    }
    out.value("r_lower", cert.r_lower);
    out.value("r_upper", cert.r_upper);
    out.value("tighten_rounds", set.tighten_rounds as f64);
    print!("{cert}");
    let bad = cert.items.iter().filter(|i| !i.pass).count();
    out.verdict(verdict(
        4,
        "barrier certification",
        cert.all_pass(),
        format!("{} checks, {bad} violations", cert.items.len()),
        "0 violations".into(),
        format!("tau0 = {:.4}", t.tau0),
    ));
    out.finish()
}

/// `(φ, λ⁻, λ⁺)` at time `tau`.
fn sandwich_table(set: &BarrierSet, tau: f64, points: usize) -> Table {
    let p = &set.params;
    let mut t = Table::new(&[("phi", "1"), ("lambda_minus", "1"), ("lambda_plus", "1")]);
    for phi in patched_grid(tau, p.gamma, set.plus.r_upper * 1.5, p.cylinder_radius() - EXTERIOR_GAP, points) {
        t.push(vec![phi, set.minus.eval(phi, tau), set.plus.eval(phi, tau)]);
    }
    t
}

const TRAJECTORY_COLUMNS: [(&str, &str); 8] = [
    ("tau", "1"),
    ("h", "1"),
    ("tip_lambda", "1"),
    ("sup_h", "1/length"),
    ("argmax_h", "node"),
    ("max_ratio", "1"),
    ("margin_plus", "1"),
    ("margin_minus", "1"),
];

/// Trajectory, snapshot index and one `(φ, λ⁻, λ, λ⁺, offset)` table per snapshot.
fn write_trajectory(out: &mut OutDir, set: &BarrierSet, traj: &EvolutionTrajectory, stride: usize) -> Result<()> {
    let mut t = Table::new(&TRAJECTORY_COLUMNS);
    let last = traj.diagnostics.len() - 1;
    for (i, d) in traj.diagnostics.iter().enumerate() {
        if i % stride.max(1) == 0 || i == last {
            t.push(vec![d.tau, d.h, d.tip_lambda, d.sup_h, d.argmax_h as f64, d.max_ratio, d.margin_plus, d.margin_minus]);
        }
    }
    out.table("trajectory.csv", &t)?;
    let mut idx = Table::new(&[("index", "1"), ("tau", "1")]);
    for (k, s) in traj.snapshots.iter().enumerate() {
        idx.push(vec![k as f64, s.tau]);
        let st = s.state(&traj.grid);
        let lam = st.lambda();
        let mut snap = Table::new(&[("phi", "1"), ("lambda_minus", "1"), ("lambda", "1"), ("lambda_plus", "1"), ("offset", "1")]);
        for (i, &phi) in traj.grid.phi.iter().enumerate() {
            snap.push(vec![phi, set.minus.eval(phi, s.tau), lam[i], set.plus.eval(phi, s.tau), st.offset(i)]);
        }
        out.table(&format!("snapshots/snap_{k:04}.csv"), &snap)?;
    }
    out.table("snapshots.csv", &idx)
}

fn trapping_verdict(traj: &EvolutionTrajectory) -> Verdict {
    let m = traj.diagnostics.iter().map(|d| d.margin_plus.min(d.margin_minus)).fold(f64::INFINITY, f64::min);
    verdict(
        5,
        "trapping",
        traj.trapped,
        format!("least margin {m:.3e}"),
        format!(">= {:.3e}", -traj.tol_grid),
        match traj.first_violation {
            Some((tau, v)) => format!("first violation {v:.3e} at tau = {tau:.4}"),
            None => format!("{} accepted, {} rejected steps", traj.accepted, traj.rejected),
        },
    )
}

fn record_run(out: &mut OutDir, set: &BarrierSet, traj: &EvolutionTrajectory) {
    out.manifest.derived = Some(set.derived.clone());
    out.value("tau0", set.tau0());
    out.value("tau_end", traj.snapshots.last().map(|s| s.tau).unwrap_or(f64::NAN));
    out.value("tol_grid", traj.tol_grid);
    out.value("accepted_steps", traj.accepted as f64);
    out.value("rejected_steps", traj.rejected as f64);
}

fn evolve_cmd(g: &Global, a: &EvolveArgs) -> Result<bool> {
    let mut cfg = validated(g)?;
    if let Some(e) = a.every {
        cfg.solver.snapshot_every = e;
    }
    cfg.validate()?;
    let policy = g.policy();
    let set = build_barriers(&cfg.params()?, &cfg.barriers, policy)?;
    let tau0 = set.tau0();
    let tau_end = a.tau_end.unwrap_or(tau0 + a.len.unwrap_or(cfg.run.tau_len));
    if !(tau_end > tau0) {
        return Err(tipflow::Error::Config(format!("tau_end = {tau_end} must exceed tau0 = {tau0:.4}")).into());
    }
    let grid = run_grid(&set.params, &cfg.solver, tau_end)?;
    let st = build_initial_data(&set, grid, tau0)?;
    let traj = evolve(st, &set.params, tau_end, Some(&set), &cfg.solver, policy)?;
    let mut out = OutDir::create(&g.out_dir, "evolve", &cfg)?;
    write_trajectory(&mut out, &set, &traj, a.stride)?;
    record_run(&mut out, &set, &traj);
    out.verdict(trapping_verdict(&traj));
    out.finish()
}

/// Rebuilds a trajectory from the files of an `evolve` run.
fn load_run(dir: &Path) -> Result<(RunManifest, EvolutionTrajectory)> {
    let man = RunManifest::read(&dir.join("manifest.toml"))?;
    let cfg = &man.config;
    let p = cfg.params()?;
    let tau_end = *man.values.get("tau_end").ok_or_else(|| anyhow!("manifest has no tau_end; not an evolve run"))?;
    let grid = run_grid(&p, &cfg.solver, tau_end)?;
    let tr = Table::read(&dir.join("trajectory.csv"))?;
    let col = |name: &str| tr.column(name).with_context(|| format!("{}", dir.join("trajectory.csv").display()));
    let (tau, h, tip, sup, arg, ratio, mp, mm) = (
        col("tau")?,
        col("h")?,
        col("tip_lambda")?,
        col("sup_h")?,
        col("argmax_h")?,
        col("max_ratio")?,
        col("margin_plus")?,
        col("margin_minus")?,
    );
    let diagnostics = (0..tau.len())
        .map(|i| StepDiag {
            tau: tau[i],
            h: h[i],
            tip_lambda: tip[i],
            sup_h: sup[i],
            argmax_h: arg[i] as usize,
            max_ratio: ratio[i],
            margin_plus: mp[i],
            margin_minus: mm[i],
        })
        .collect();
    let idx = Table::read(&dir.join("snapshots.csv"))?;
    let mut snapshots = vec![];
    for (k, snap_tau) in idx.column("tau")?.into_iter().enumerate() {
        let path = dir.join(format!("snapshots/snap_{k:04}.csv"));
        let s = Table::read(&path)?;
        let phi = s.column("phi")?;
        if phi != grid.phi {
            bail!("{}: node positions differ from the grid rebuilt from the manifest", path.display());
        }
        let lam = s.column("lambda")?;
        let off = s.column("offset")?;
        let m = phi.len() - 1;
        let mut y = off[..m].to_vec();
        y[0] = lam[0];
        snapshots.push(Snapshot { tau: snap_tau, y, boundary: lam[m] });
    }
    if snapshots.is_empty() {
        bail!("{}: no snapshots", dir.display());
    }
    let traj = EvolutionTrajectory {
        tol_grid: tol_grid(&grid),
        grid,
        n: p.n,
        gamma: p.gamma,
        a_tilde: p.a_tilde,
        diagnostics,
        snapshots,
        trapped: man.pass,
        first_violation: None,
        accepted: man.values.get("accepted_steps").copied().unwrap_or(0.0) as usize,
        rejected: man.values.get("rejected_steps").copied().unwrap_or(0.0) as usize,
    };
    Ok((man, traj))
}

/// `(τ, T - t, sup H, fitted)` with `T - t = e^{-τ}`.
fn blowup_table(traj: &EvolutionTrajectory, fit: &BlowupFit) -> Table {
    let mut t = Table::new(&[("tau", "1"), ("T_minus_t", "time"), ("sup_h", "1/length"), ("fitted", "1/length")]);
    for d in &traj.diagnostics {
        t.push(vec![d.tau, (-d.tau).exp(), d.sup_h, (fit.fit.intercept - fit.fit.exponent * d.tau).exp()]);
    }
    t
}

fn blowup_verdict(gamma: f64, fit: &BlowupFit) -> Verdict {
    verdict(
        6,
        &format!("type-II exponent, gamma {gamma}"),
        fit.exponent_error() <= RATE_REL_TOL,
        format!("{:.5} vs {:.3} (rel err {:.2e})", fit.fit.exponent, fit.expected_exponent, fit.exponent_error()),
        format!("{RATE_REL_TOL}"),
        format!("halves {:.5}, {:.5}; amplitude {:.4} vs {:.4}", fit.halves.0, fit.halves.1, fit.amplitude, fit.expected_amplitude),
    )
}

fn analyze(g: &Global, a: &AnalyzeArgs) -> Result<bool> {
    let (man, traj) = load_run(&a.run_dir)?;
    let cfg = man.config.clone();
    let p = cfg.params()?;
    let mut out = OutDir::create(&g.out_dir, "analyze", &cfg)?;
    out.manifest.derived = man.derived.clone();

    let fit = fit_blowup_exponent(&traj, cfg.fit)?;
    out.table("blowup.csv", &blowup_table(&traj, &fit))?;
    out.value("blowup_exponent", fit.fit.exponent);
    out.value("blowup_amplitude", fit.amplitude);
    out.value("blowup_half_spread", fit.half_spread());
    out.verdict(blowup_verdict(p.gamma, &fit));

    let st = traj.final_state();
    let ext = fit_exterior_rate(&st.sampled(), p.n)?;
    let expect = 1.0 / (0.5 - p.gamma);
    let r2 = 2.0 * (p.n as f64 - 1.0);
    let mut et = Table::new(&[("phi", "1"), ("y", "1"), ("gap", "1"), ("fitted_gap", "1")]);
    for (&phi, &l) in st.grid.phi.iter().zip(&st.lambda()) {
        let y = -1.0 / l;
        et.push(vec![phi, y, r2 - phi * phi, (ext.intercept + ext.exponent * y.ln()).exp()]);
    }
    out.table("exterior.csv", &et)?;
    out.value("exterior_slope", ext.exponent);
    let rel = (ext.exponent / expect - 1.0).abs();
    out.verdict(verdict(
        7,
        "exterior rate",
        rel <= RATE_REL_TOL,
        format!("slope {:.5} vs {expect:.5} (rel err {rel:.2e})", ext.exponent),
        format!("{RATE_REL_TOL}"),
        format!("{} points in the top decade of y", ext.points),
    ));

    let soliton = soliton_for(&p, cfg.barriers.profile_tol)?;
    let series = soliton_convergence(&traj, &soliton, cfg.run.z_window)?;
    let mut stab = Table::new(&[("tau", "1"), ("error", "1")]);
    for &(t, e) in &series {
        stab.push(vec![t, e]);
    }
    out.table("soliton.csv", &stab)?;
    out.value("soliton_error_first", series[0].1);
    out.value("soliton_error_last", series[series.len() - 1].1);

    let rep = check_ratio_principle(&traj);
    out.value("max_ratio", rep.max_ratio);
    out.verdict(verdict(
        9,
        "curvature ratio",
        rep.holds(RATIO_TOL),
        format!("max R = {:.9}, {} off-tip maxima", rep.max_ratio, rep.off_tip.len()),
        format!("1 + {RATIO_TOL:e}"),
        format!("{} samples", rep.samples),
    ));
    out.finish()
}

fn sweep(g: &Global, a: &SweepArgs) -> Result<bool> {
    let mut base = Global { gamma: vec![], ..g.clone() }.config()?;
    let gammas = if g.gamma.is_empty() { base.run.sweep_gammas.clone() } else { g.gamma.clone() };
    let len = a.len.unwrap_or(base.run.sweep_len);
    base.run.sweep_gammas = gammas.clone();
    base.run.sweep_len = len;
    let cfgs: Vec<Config> = gammas
        .iter()
        .map(|&gm| {
            let mut c = base.clone();
            c.params.gamma = gm;
            c.validate().map(|_| c)
        })
        .collect::<tipflow::Result<_>>()?;
    let policy = g.policy();
    let runs = exec::map(policy, &cfgs, |c| -> tipflow::Result<_> {
        let set = barrier_set(&params_for_gamma(c, c.params.gamma), c, policy)?;
        run_from(set, c, c.solver.intervals, len, policy)
    });
    let mut out = OutDir::create(&g.out_dir, "sweep", &base)?;
    for ((c, run), gm) in cfgs.iter().zip(runs).zip(&gammas) {
        let run = run?;
        let name = format!("gamma_{gm}");
        let mut sub = OutDir::create(&g.out_dir.join(&name), "evolve", c)?;
        write_trajectory(&mut sub, &run.set, &run.traj, 1)?;
        record_run(&mut sub, &run.set, &run.traj);
        sub.verdict(trapping_verdict(&run.traj));
        let mut w = c.fit;
        w.last_fraction = FIT_LAST_FRACTION;
        let fit = fit_blowup_exponent(&run.traj, w)?;
        sub.table("blowup.csv", &blowup_table(&run.traj, &fit))?;
        sub.value("blowup_exponent", fit.fit.exponent);
        let v = blowup_verdict(*gm, &fit);
        sub.verdict(v.clone());
        let outputs: Vec<String> = sub.manifest.outputs.iter().map(|o| format!("{name}/{o}")).collect();
        sub.finish()?;
        out.manifest.outputs.extend(outputs);
        out.manifest.outputs.push(format!("{name}/manifest.toml"));
        out.value(&format!("{name}_exponent"), fit.fit.exponent);
        out.verdict(v);
    }
    out.finish()
}

fn verify_all(g: &Global, a: &VerifyArgs) -> Result<bool> {
    let cfg = validated(g)?;
    let v = Verifier::new(cfg.clone(), g.policy())?;
    let ids: Vec<u32> = if a.criteria.is_empty() { (1..=10).collect() } else { a.criteria.clone() };
    let mut out = OutDir::create(&g.out_dir, "verify-all", &cfg)?;
    let mut lines = String::new();
    for k in ids {
        let r = v.criterion(k);
        lines.push_str(&format!("{r}\n"));
        out.verdict(r);
    }
    for (k, x) in v.values() {
        out.value(&k, x);
    }
    if let Ok(set) = v.baseline_set() {
        out.manifest.derived = Some(set.derived.clone());
    }
    out.text("verdicts.txt", &lines)?;
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let cfg: anyhow::Error = tipflow::Error::Config("x".into()).into();
        assert_eq!(exit_code(&cfg.context("loading")), 2);
        assert_eq!(exit_code(&tipflow::Error::InvalidParams("x".into()).into()), 2);
        assert_eq!(exit_code(&tipflow::Error::Barrier("x".into()).into()), 1);
        assert_eq!(exit_code(&anyhow!("io")), 1);
    }
}
