//! Command-line front end for the gel-shatter simulator.

pub mod campaign;
pub mod commands;
pub mod output;
pub mod params;
pub mod reproduce;
pub mod summary;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gelshatter::InitialCondition;

use params::parse_count;

#[derive(Debug, Parser)]
#[command(name = "gelshatter", version, about = "Stochastic coalescence with shattering: gel-shatter cycles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one parameter point (optionally several replicas).
    Run(RunArgs),
    /// Run a campaign over a parameter grid.
    Sweep(SweepArgs),
    /// Integrate the mean-field equations and compare with the closed form.
    Meanfield(MeanfieldArgs),
    /// Re-run the analysis on stored trajectories.
    Analyze(AnalyzeArgs),
    /// Produce the data behind one of the standard figures.
    Reproduce(ReproduceArgs),
}

/// Options shared by every command that writes files or uses threads.
#[derive(Debug, Clone, Args)]
pub struct ExecArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, env = "GELSHATTER_WORKERS", value_parser = parse_count)]
    pub workers: Option<u64>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

impl ExecArgs {
    pub fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    /// Runs `f` on a pool of the requested size.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(w) = self.workers {
            builder = builder.num_threads(w.max(1) as usize);
        }
        let pool = builder.build().context("building worker pool")?;
        Ok(pool.install(f))
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Flat key-value config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Total mass M.
    #[arg(long = "M", value_parser = parse_count)]
    pub mass: Option<u64>,
    /// Coalescence rate constant.
    #[arg(long = "K", allow_negative_numbers = true)]
    pub k_hat: Option<f64>,
    /// Fragmentation rate constant.
    #[arg(long = "F", allow_negative_numbers = true)]
    pub f_hat: Option<f64>,
    /// Clusters of this size or smaller never shatter.
    #[arg(long, value_parser = parse_count)]
    pub threshold: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub steps: Option<u64>,
    #[arg(long = "sample-interval", value_parser = parse_count)]
    pub sample_interval: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub replicas: Option<u64>,
    /// all-monomers or single-gel.
    #[arg(long)]
    pub init: Option<InitialCondition>,
    /// Record the full size histogram at every sample.
    #[arg(long)]
    pub histograms: bool,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Campaign file.
    pub campaign: PathBuf,
    #[arg(long, value_parser = parse_count)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub replicas: Option<u64>,
    /// Step budget per replica; overrides the campaign's `steps`.
    #[arg(long, value_parser = parse_count)]
    pub steps: Option<u64>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MeanfieldArgs {
    #[arg(long = "K")]
    pub k_hat: f64,
    #[arg(long = "F")]
    pub f_hat: f64,
    /// Truncation size K_c.
    #[arg(long = "kc", default_value = "1000", value_parser = parse_count)]
    pub k_c: u64,
    #[arg(long, default_value_t = 0.005)]
    pub dt: f64,
    /// Integrate for exactly this long instead of to steady state.
    #[arg(long = "T")]
    pub duration: Option<f64>,
    /// Steady-state tolerance on the largest |dn_k/dt|.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Longest integration time when seeking the steady state.
    #[arg(long = "t-max", default_value_t = 1e4)]
    pub t_max: f64,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Trajectory files or run directories.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Lower end of the power-law fitting window.
    #[arg(long = "k-min", default_value = "1", value_parser = parse_count)]
    pub k_min: u64,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    /// Full-size grid (fig4 only; long runtime).
    #[arg(long)]
    pub full: bool,
    #[arg(long, value_parser = parse_count)]
    pub seed: Option<u64>,
    /// Override the recipe's step budget.
    #[arg(long, value_parser = parse_count)]
    pub steps: Option<u64>,
    /// Lower end of the fitting window for the time-averaged density (fig1).
    #[arg(long = "k-min", default_value = "10", value_parser = parse_count)]
    pub k_min: u64,
    /// Fraction range `START:END` of the snapshot series searched for the
    /// median-exponent snapshot (fig1).
    #[arg(long = "median-window", default_value = "0:1")]
    pub median_window: String,
    #[command(flatten)]
    pub exec: ExecArgs,
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => commands::cmd_run(&a),
        Command::Sweep(a) => campaign::cmd_sweep(&a),
        Command::Meanfield(a) => commands::cmd_meanfield(&a),
        Command::Analyze(a) => commands::cmd_analyze(&a),
        Command::Reproduce(a) => reproduce::cmd_reproduce(&a),
    }
}
