//! `tipflow` batch front end. Every subcommand writes CSV tables and a
//! `manifest.toml` into `--out-dir`.
//!
//! Exit status: 0 when every gate of the run passes, 1 on a gate failure or a
//! runtime error, 2 on a usage or configuration error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tipflow::config::Config;
use tipflow::exec::ExecPolicy;

#[derive(Parser, Debug)]
#[command(name = "tipflow", version, about = "Rescaled rotationally symmetric mean curvature flow experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// TOML configuration; missing keys take the baseline values.
    #[arg(long, global = true, env = "TIPFLOW_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory for CSV tables and the manifest.
    #[arg(long, global = true, default_value = "tipflow-out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true)]
    pub n: Option<u32>,
    /// Rate parameter; `sweep` takes a comma-separated list.
    #[arg(long, global = true, value_delimiter = ',')]
    pub gamma: Vec<f64>,
    #[arg(long, global = true)]
    pub a_tilde: Option<f64>,
    #[arg(long, global = true)]
    pub c_plus: Option<f64>,
    #[arg(long, global = true)]
    pub c_minus: Option<f64>,
    #[arg(long, global = true)]
    pub c_mid: Option<f64>,
    #[arg(long, global = true)]
    pub b_plus: Option<f64>,
    #[arg(long, global = true)]
    pub b_minus: Option<f64>,
    #[arg(long, global = true)]
    pub r1: Option<f64>,
    #[arg(long, global = true)]
    pub r2: Option<f64>,
    /// Lower bound on the initial time.
    #[arg(long, global = true)]
    pub tau0: Option<f64>,
    /// Spatial intervals of evolution runs.
    #[arg(long, global = true)]
    pub intervals: Option<usize>,
    /// TOML integers are signed, so seeds stop at 2^63 - 1.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: Option<u64>,
    /// Run everything on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

impl Global {
    pub fn policy(&self) -> ExecPolicy {
        if self.sequential {
            ExecPolicy::Sequential
        } else {
            ExecPolicy::Parallel
        }
    }

    /// Configuration file (or baseline) with the command-line overrides applied.
    pub fn config(&self) -> tipflow::Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let p = &mut c.params;
        if let Some(v) = self.n {
            p.n = v;
        }
        match self.gamma[..] {
            [] => {}
            [g] => p.gamma = g,
            _ => return Err(tipflow::Error::Config("a list of --gamma values is only accepted by sweep".into())),
        }
        if let Some(v) = self.a_tilde {
            p.a_tilde = v;
        }
        let opt = |dst: &mut Option<f64>, v: Option<f64>| {
            if v.is_some() {
                *dst = v;
            }
        };
        opt(&mut p.c_plus, self.c_plus);
        opt(&mut p.c_minus, self.c_minus);
        opt(&mut p.c_mid, self.c_mid);
        opt(&mut p.b_plus, self.b_plus);
        opt(&mut p.b_minus, self.b_minus);
        opt(&mut p.r1, self.r1);
        opt(&mut p.r2, self.r2);
        opt(&mut p.tau0, self.tau0);
        if let Some(v) = self.intervals {
            c.solver.intervals = v;
        }
        if let Some(v) = self.seed {
            c.run.seed = v;
        }
        Ok(c)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate the soliton profile P (or the correction Q).
    Profile(ProfileArgs),
    /// Sample a formal solution.
    Formal(FormalArgs),
    /// Operator residual of one barrier piece.
    Residual(ResidualArgs),
    /// Build and certify the barriers; sample λ±.
    Barriers(BarriersArgs),
    /// Evolve the certified initial data.
    Evolve(EvolveArgs),
    /// Fit rates on the output of `evolve`.
    Analyze(AnalyzeArgs),
    /// One evolution and exponent fit per γ.
    Sweep(SweepArgs),
    /// Run the acceptance gates.
    VerifyAll(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    P,
    Q,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long, value_enum, default_value = "p")]
    pub which: Which,
    /// End of the tabulation; defaults to 1.45 for n = 1 and R1-scaled otherwise.
    #[arg(long)]
    pub z_max: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PictureArg {
    Y,
    Lambda,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    Interior,
    Exterior,
}

#[derive(Args, Debug)]
pub struct FormalArgs {
    #[arg(long, value_enum, default_value = "lambda")]
    pub picture: PictureArg,
    #[arg(long, value_enum, default_value = "interior")]
    pub region: RegionArg,
    #[arg(long, default_value_t = 5.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    /// Upper end of the abscissa (`z` inside, `φ` outside); defaults to R1 or the cylinder radius.
    #[arg(long)]
    pub x_max: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Candidate {
    InteriorPlus,
    InteriorMinus,
    ExteriorPlus,
    ExteriorMinus,
}

#[derive(Args, Debug)]
pub struct ResidualArgs {
    #[arg(long, value_enum)]
    pub candidate: Candidate,
    /// Defaults to the certified start time of the piece.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
}

#[derive(Args, Debug)]
pub struct BarriersArgs {
    /// Times at which λ± are sampled; defaults to τ₀.
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,
    #[arg(long, default_value_t = 801)]
    pub points: usize,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    /// Length of the run after τ₀; defaults to `run.tau_len`.
    #[arg(long, conflicts_with = "tau_end")]
    pub len: Option<f64>,
    #[arg(long)]
    pub tau_end: Option<f64>,
    /// Snapshot spacing in τ.
    #[arg(long)]
    pub every: Option<f64>,
    /// Keep every k-th trajectory row.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Output directory of an `evolve` run.
    #[arg(long)]
    pub run_dir: PathBuf,
}

/// The γ values come from `--gamma` (default `run.sweep_gammas`).
#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Defaults to `run.sweep_len`.
    #[arg(long)]
    pub len: Option<f64>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Criterion ids to run; all by default.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Vec<u32>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("tipflow").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn overrides_apply_on_top_of_baseline() {
        let cli = parse(&["--gamma", "1.5", "--c-plus", "0.7", "--intervals", "64", "formal"]);
        let c = cli.global.config().unwrap();
        assert_eq!(c.params.gamma, 1.5);
        assert_eq!(c.params.c_plus, Some(0.7));
        assert_eq!(c.params.c_minus, None);
        assert_eq!(c.solver.intervals, 64);
        assert_eq!(cli.global.policy(), ExecPolicy::Parallel);
    }

    #[test]
    fn gamma_list_only_for_sweep() {
        let cli = parse(&["--gamma", "0.75,1", "sweep"]);
        assert_eq!(cli.global.gamma, vec![0.75, 1.0]);
        assert!(matches!(cli.global.config(), Err(tipflow::Error::Config(_))));
    }

    #[test]
    fn flags_after_subcommand() {
        let cli = parse(&["evolve", "--len", "2", "--sequential", "--n", "3"]);
        assert_eq!(cli.global.policy(), ExecPolicy::Sequential);
        assert_eq!(cli.global.config().unwrap().params.n, 3);
        assert!(matches!(cli.command, Command::Evolve(EvolveArgs { len: Some(l), .. }) if l == 2.0));
    }
}
