//! The `safescale` command line.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 for
//! runtime and data errors.

mod commands;
mod reproduce;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::Result;

pub use reproduce::{reproduce, ReproduceSummary};

#[derive(Debug, Parser)]
#[command(
    name = "safescale",
    version,
    about = "Simulate, label, train and evaluate safety-scaling predictors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArg {
    /// Run configuration (TOML); the bundled default when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

impl ConfigArg {
    pub fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::builtin()),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation campaign and write the trace CSV.
    Simulate(SimulateArgs),
    /// Cluster the scaling values of a trace, label every sample and split by episode.
    Label(LabelArgs),
    /// Train a predictor on a labeled trace.
    Train(TrainArgs),
    /// Evaluate a predictor on a labeled test trace.
    Eval(EvalArgs),
    /// Predict the scaling for one input row.
    Predict {
        predictor: PathBuf,
        /// Comma-separated feature values.
        #[arg(long, allow_hyphen_values = true)]
        input: String,
    },
    /// Run the whole pipeline from one config.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    pub trace: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub min_pts: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Output directory; the config's output_dir when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub labeled: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 0)]
    pub w: usize,
    /// Std of the noise injected into the training inputs, m.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cluster model; defaults to cluster_model.toml next to the labeled file.
    #[arg(long, value_name = "PATH")]
    pub cluster: Option<PathBuf>,
    /// Drop the goal columns from N-step and average inputs.
    #[arg(long)]
    pub no_goals: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub row_stride: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub predictor: PathBuf,
    pub test: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    /// Comma-separated noise levels, m.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    #[arg(long)]
    pub heatmap_cell: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Row label in the report; the predictor file stem by default.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => commands::simulate(&args, out),
        Command::Label(args) => commands::label(&args, out),
        Command::Train(args) => commands::train(&args, out),
        Command::Eval(args) => commands::eval(&args, out),
        Command::Predict { predictor, input } => commands::predict(&predictor, &input, out),
        Command::Reproduce(args) => {
            let mut cfg = args.config.load()?;
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            if let Some(n) = args.episodes {
                cfg.campaign.episodes = n;
            }
            cfg.validate()?;
            let dir = args.out.unwrap_or_else(|| cfg.output_dir.clone());
            let summary = reproduce(&cfg, &dir)?;
            writeln!(out, "wrote {} files to {}", summary.files.len(), dir.display()).ok();
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                3
            }
        }
    }
}
