//! Batch front end for the cost-volume transport library.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 input or
//! config error, 2 solver non-convergence, 3 numeric abort, 4
//! verification failure.

mod config;
mod heatmap;
mod solve;
mod train;
mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use covot::CovotError;

#[derive(Parser)]
#[command(
    name = "covot",
    version,
    about = "Cost-volume optimal transport: solver, trainer, heatmaps, verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one entropic transport instance from a cost matrix or a
    /// feature-file pair
    Solve(SolveArgs),
    /// Run the two-stage alignment training loop on a synthetic scene
    Train(TrainArgs),
    /// Export one class column of a similarity volume as CSV and PGM
    Heatmap(HeatmapArgs),
    /// Cross-check the solver against the exact oracles on random instances
    Verify(VerifyArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON config: a bare config object or a previously emitted summary
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for output files (created if absent)
    #[arg(long, default_value = "covot-out")]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Cost matrix in the headered grid format
    #[arg(long)]
    cost: Option<PathBuf>,
    /// Visual feature file (grid format); requires --textual
    #[arg(long)]
    visual: Option<PathBuf>,
    /// Textual feature file (grid format); requires --visual
    #[arg(long)]
    textual: Option<PathBuf>,
    /// Entropic regularization strength
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Stopping threshold on the column-scaling change
    #[arg(long, allow_negative_numbers = true)]
    delta_v: Option<f64>,
    /// Iteration cap
    #[arg(long)]
    max_iters: Option<usize>,
    /// Iterate in the log domain (true/false)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    log_domain: Option<bool>,
    /// Also write the transport plan as CSV
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    plan: Option<bool>,
    /// Also write the per-iteration convergence trace as CSV
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    trace: Option<bool>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Scene grid height
    #[arg(long)]
    height: Option<usize>,
    /// Scene grid width
    #[arg(long)]
    width: Option<usize>,
    /// Number of classes
    #[arg(long)]
    classes: Option<usize>,
    /// Feature noise level for the synthetic scene
    #[arg(long, allow_negative_numbers = true)]
    noise_sigma: Option<f64>,
    /// Feature dimension
    #[arg(long)]
    dim: Option<usize>,
    /// Softmax temperature
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// Guidance weight on the transport term
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Outer-loop learning rate
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    /// Number of outer steps
    #[arg(long)]
    outer_steps: Option<usize>,
    /// Seed for scene generation and model init
    #[arg(long)]
    seed: Option<u64>,
    /// Noise level of the perturbed embedding init
    #[arg(long, allow_negative_numbers = true)]
    init_sigma: Option<f64>,
    /// Re-solve the plan every this many outer steps
    #[arg(long)]
    refresh_every: Option<usize>,
    /// Entropic regularization strength for the inner solver
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Inner-solver stopping threshold
    #[arg(long, allow_negative_numbers = true)]
    delta_v: Option<f64>,
    /// Inner-solver iteration cap
    #[arg(long)]
    max_iters: Option<usize>,
    /// Inner solver iterates in the log domain (true/false)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    log_domain: Option<bool>,
    /// Also run the β=0 twin from the same init
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    ablate: Option<bool>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(clap::Args)]
struct HeatmapArgs {
    /// Similarity volume CSV (rows = pixels, columns = classes)
    #[arg(long)]
    volume: Option<PathBuf>,
    /// Model embedding file (grid format); defaults to scene prototypes
    #[arg(long)]
    model: Option<PathBuf>,
    /// Grid height
    #[arg(long)]
    height: Option<usize>,
    /// Grid width
    #[arg(long)]
    width: Option<usize>,
    /// Number of classes for the generated scene
    #[arg(long)]
    classes: Option<usize>,
    /// Feature noise level for the generated scene
    #[arg(long, allow_negative_numbers = true)]
    noise_sigma: Option<f64>,
    /// Feature dimension for the generated scene
    #[arg(long)]
    dim: Option<usize>,
    /// Scene seed
    #[arg(long)]
    seed: Option<u64>,
    /// Class column to render
    #[arg(long)]
    class: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Number of random instances (0 passes vacuously)
    #[arg(long)]
    trials: Option<usize>,
    /// Largest instance side length
    #[arg(long)]
    max_size: Option<usize>,
    /// Single regularization strength replacing the default grid
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Base seed; trial t uses seed + t
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => solve::run(args),
        Command::Train(args) => train::run(args),
        Command::Heatmap(args) => heatmap::run(args),
        Command::Verify(args) => verify::run(args),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    };
    std::process::exit(code);
}

/// Maps the error chain onto the exit-code contract. Non-convergence is 2,
/// numeric aborts are 3, anything else (bad input, bad config, IO) is 1.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(ce) = cause.downcast_ref::<CovotError>() {
            return match ce {
                CovotError::NotConverged { .. } => 2,
                CovotError::NonFiniteLoss { .. } | CovotError::Numerical { .. } => 3,
                _ => 1,
            };
        }
    }
    1
}
