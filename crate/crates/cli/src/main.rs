//! `wcoreset`: build, evaluate and compare Wasserstein measure coresets.
//!
//! Exit codes: 0 success, 1 failed `check`, 2 configuration error, 3 data
//! error, 4 numerical failure.

mod build;
mod check;
mod eval;
mod experiment;
mod input;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wcoreset::solver::{Eta, SolverConfig};
use wcoreset::{Error, Exponent};

#[derive(Parser)]
#[command(name = "wcoreset", version, about = "Wasserstein measure coresets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a coreset from a dataset, a synthetic distribution or a stream.
    Build(build::BuildArgs),
    /// Measure a coreset against a dataset or distribution.
    Eval(eval::EvalArgs),
    /// Run a method × size × repeat comparison on a downstream task.
    Experiment(experiment::ExperimentArgs),
    /// Run the fast invariant suite.
    Check(check::CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    W1,
    W2,
    /// Sinkhorn divergence with `p = 2`.
    Sd,
}

/// Solver flags shared by `build` and `experiment`.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Minibatch size; defaults to max(256, 4n).
    #[arg(long)]
    pub minibatch: Option<usize>,
    /// Outer iterations.
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// Site step size γ.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Entropic regularization. 0 selects the unregularized path; with
    /// `--metric sd` the default is 0.05 × the median minibatch pair cost.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Dual ascent steps per outer iteration.
    #[arg(long, default_value_t = 200)]
    pub dual_steps: usize,
    /// Sinkhorn iterations per outer iteration.
    #[arg(long, default_value_t = 100)]
    pub sinkhorn_iters: usize,
    /// Gradient-norm stopping tolerance; defaults to 1e-4 × data scale.
    #[arg(long)]
    pub grad_tol: Option<f64>,
}

impl SolverArgs {
    pub fn config(&self, metric: Metric, n: usize, seed: u64) -> SolverConfig {
        let p = match metric {
            Metric::W1 => Exponent::One,
            Metric::W2 | Metric::Sd => Exponent::Two,
        };
        let eta = match (metric, self.eta) {
            (Metric::Sd, None) => Eta::Adaptive(Eta::DEFAULT_FACTOR),
            (_, None) => Eta::Off,
            (_, Some(e)) if e == 0.0 => Eta::Off,
            (_, Some(e)) => Eta::Fixed(e),
        };
        SolverConfig {
            n,
            p,
            eta,
            minibatch: self.minibatch,
            gamma: self.step,
            outer_iters: self.iters,
            dual_steps: self.dual_steps,
            sinkhorn_iters: self.sinkhorn_iters,
            seed,
            grad_tolerance: self.grad_tol,
            ..SolverConfig::new(n, p)
        }
    }
}

/// Input flags shared by every command that reads data.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV path, synthetic preset (gaussian2d, banana, uniform2d, mixture4,
    /// gaussian:<d>, uniform:<d>), a synthetic-spec `.json` file, or `-` for
    /// rows on standard input.
    #[arg(long)]
    pub input: String,
    /// Zero-based column holding integer labels.
    #[arg(long)]
    pub labels_col: Option<usize>,
    /// The CSV input has a header row.
    #[arg(long)]
    pub header: bool,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::SizeGuard { .. } | Error::Json(_) => 2,
        Error::Numerical(_) => 4,
        _ => 3,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("MC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::Config(format!("MC_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Build(a) => build::run(a, &argv),
        Command::Eval(a) => eval::run(a, &argv),
        Command::Experiment(a) => experiment::run(a, &argv),
        Command::Check(a) => Ok(check::run(a)),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
