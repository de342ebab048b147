//! `rlscale`: fit RL scaling laws from training-run logs and turn them into
//! compute allocations.
//!
//! Commands talk to each other through files in the `--out` directory:
//!
//! ```text
//! synth --spec s.toml --out w
//! preprocess --manifest w/manifest.toml --input w/runs.csv --out w
//! fit-data --input w/efficiency.csv --out w
//! evaluate --input w/data_fit.json --input w/efficiency.csv --out w
//! ```

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rlscale::scaling_laws::FitMode;

use crate::io::CliError;

#[derive(Parser)]
#[command(name = "rlscale", version, about = "Scaling laws and compute allocation for value-based RL")]
struct Cli {
    #[command(flatten)]
    config: PipelineConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct PipelineConfig {
    /// Task manifest (TOML or JSON)
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Input file; repeat for several
    #[arg(long, global = true)]
    pub input: Vec<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Number of return thresholds between j_min and j_max
    #[arg(long, global = true, default_value_t = 20)]
    pub thresholds: usize,
    /// Bootstrap replicates
    #[arg(long = "bootstrap-k", global = true, default_value_t = 100)]
    pub bootstrap_k: usize,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Independent)]
    pub mode: ModeArg,
    /// Data budget D0 in environment steps
    #[arg(long = "data-budget", global = true)]
    pub data_budget: Option<f64>,
    /// Compute budget C0 in FLOPs
    #[arg(long = "compute-budget", global = true)]
    pub compute_budget: Option<f64>,
    /// Cost of one environment step in FLOPs
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// FLOPs per parameter per sample
    #[arg(long, global = true, default_value_t = 1.0)]
    pub k: f64,
    /// Largest-budget frontier points held out of the power-law fits
    #[arg(long = "extrapolate-top", global = true, default_value_t = 5)]
    pub extrapolate_top: usize,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Task to use when an input holds several
    #[arg(long, global = true)]
    pub task: Option<String>,
    /// Threshold whose fit to use (default: the highest)
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
}

impl PipelineConfig {
    fn validate(&self) -> Result<(), CliError> {
        if self.thresholds < 2 {
            return Err(CliError::input("--thresholds must be at least 2"));
        }
        if self.bootstrap_k < 1 {
            return Err(CliError::input("--bootstrap-k must be at least 1"));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(CliError::input("--k must be positive"));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Independent,
    Shared,
    Aggregated,
}

impl From<ModeArg> for FitMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Independent => FitMode::Independent,
            ModeArg::Shared => FitMode::SharedExponent,
            ModeArg::Aggregated => FitMode::Aggregated,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Validate run logs against a manifest and write them back in canonical order
    Ingest,
    /// Extract the data-efficiency table and bootstrap batch optima
    Preprocess,
    /// Fit the batch-size rule
    FitBatch,
    /// Fit data-efficiency surfaces per threshold
    FitData,
    /// Solve for the optimal UTD ratio and model size under a budget
    Allocate,
    /// Budget-optimal allocations across thresholds and their power laws
    Frontier,
    /// Data-efficiency penalty of off-optimal batch sizes
    Sensitivity,
    /// Relative error of a stored fit on an efficiency table
    Evaluate,
    /// Generate synthetic run logs from known laws
    Synth {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Iso-data contours and frontier tables for plotting
    Report {
        #[arg(long = "contour-points", default_value_t = 50)]
        contour_points: usize,
        #[arg(long = "sigma-min", default_value_t = 0.25)]
        sigma_min: f64,
        #[arg(long = "sigma-max", default_value_t = 64.0)]
        sigma_max: f64,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = &cli.config;
    cfg.validate()?;
    match &cli.command {
        Command::Ingest => commands::ingest(cfg),
        Command::Preprocess => commands::preprocess(cfg),
        Command::FitBatch => commands::fit_batch(cfg),
        Command::FitData => commands::fit_data(cfg),
        Command::Allocate => commands::allocate(cfg),
        Command::Frontier => commands::frontier(cfg),
        Command::Sensitivity => commands::sensitivity(cfg),
        Command::Evaluate => commands::evaluate(cfg),
        Command::Synth { spec } => commands::synth(cfg, spec),
        Command::Report {
            contour_points,
            sigma_min,
            sigma_max,
        } => commands::report(cfg, *contour_points, (*sigma_min, *sigma_max)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.config.format == Format::Structured {
                let summary = serde_json::json!({
                    "error": e.kind(),
                    "message": e.message(),
                    "exit_code": e.exit_code(),
                });
                eprintln!("{summary}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
