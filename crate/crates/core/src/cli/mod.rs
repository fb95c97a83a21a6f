//! Command-line interface: `simulate`, `train`, `sample`, `evaluate` and
//! `qqdata`.

mod commands;
pub mod config;
pub mod io;
pub mod search;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{FileConfig, Rounding};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "wagan",
    version,
    about = "Tail dependence modelling with a Wasserstein GAN on the Aitchison simplex"
)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a logistic-dependence sample with Pareto margins to CSV.
    Simulate(SimulateArgs),
    /// Train the generator/critic pair on the extreme angles of a data set.
    Train(TrainArgs),
    /// Draw tail samples on the data scale from a trained checkpoint.
    Sample(SampleArgs),
    /// Score generated tail samples against a test set.
    Evaluate(EvaluateArgs),
    /// Export per-margin GPD quantile-quantile points.
    Qqdata(QqArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat TOML config (`version = 1` required); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rounding of sqrt(n) for default thresholds.
    #[arg(long, value_enum)]
    pub rounding: Option<Rounding>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub d: Option<usize>,
    /// Logistic dependence parameter, θ ≥ 1 (1 = independence).
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Pareto tail index of the margins.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training data CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint output path.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-epoch loss log (default: `<out stem>.log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub lambda_gp: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub n_critic: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub n_epochs: Option<usize>,
    /// Generator hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden_g: Option<Vec<usize>>,
    /// Critic hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden_d: Option<Vec<usize>>,
    /// Number of random hyperparameter candidates to try.
    #[arg(long)]
    pub search: Option<usize>,
    /// Validation CSV used to score search candidates.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Per-candidate score table (default: `<out stem>.search.csv`).
    #[arg(long)]
    pub search_table: Option<PathBuf>,
    /// Generated angles per candidate when scoring.
    #[arg(long)]
    pub n_angles: Option<usize>,
    #[arg(long)]
    pub subset_cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// The data the checkpoint was trained on (for order statistics and
    /// marginal fits).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k2: Option<usize>,
    /// Number of tail rows to emit.
    #[arg(long)]
    pub n_star: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-margin threshold and GPD fit (default: `<out stem>.fits.csv`).
    #[arg(long)]
    pub fits_out: Option<PathBuf>,
    /// Also write this many generated angles.
    #[arg(long)]
    pub n_angles: Option<usize>,
    /// Angles output (default: `<out stem>.angles.csv`).
    #[arg(long)]
    pub angles_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Generated tail rows on the data scale.
    #[arg(long)]
    pub generated: PathBuf,
    /// Held-out test data.
    #[arg(long)]
    pub test: PathBuf,
    /// Generated angles; when absent they are estimated empirically from
    /// the generated rows.
    #[arg(long)]
    pub angles: Option<PathBuf>,
    /// Fits sidecar from `sample`, supplying the marginal thresholds.
    #[arg(long, conflicts_with = "k2")]
    pub fits: Option<PathBuf>,
    /// Take thresholds as the test set's upper order statistics instead.
    #[arg(long)]
    pub k2: Option<usize>,
    /// Number of extremes used for the empirical test angular measure.
    #[arg(long)]
    pub k_test: Option<usize>,
    #[arg(long)]
    pub subset_cap: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-subset coefficients (default: `<out stem>.scatter.csv`).
    #[arg(long)]
    pub scatter: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QqArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Train(a) => commands::train(a),
        Command::Sample(a) => commands::sample(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Qqdata(a) => commands::qqdata(a),
    }
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
