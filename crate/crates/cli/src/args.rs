use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use softtarget_core::experiment::{Architecture, Regime, DATA_DIR_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "softtarget",
    version,
    about = "Train and analyze SoftTarget-regularized MLPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment.
    Train(TrainArgs),
    /// Run every architecture x regime (x seed) combination.
    Grid(GridArgs),
    /// Co-label covariance of checkpoints on the training set.
    Analyze(AnalyzeArgs),
    /// Tabulate report.json files by architecture and regime.
    Compare(CompareArgs),
}

/// Where the base config comes from, plus the overrides shared by all
/// commands that need a dataset. Precedence: flags, then environment, then
/// the config file or preset.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,

    /// Built-in config: mnist-desk or mnist-full.
    #[arg(long)]
    pub preset: Option<String>,

    /// Directory holding the MNIST IDX files.
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,

    /// Keep only the first N training samples (IDX datasets).
    #[arg(long)]
    pub train_limit: Option<usize>,

    /// Keep only the first N test samples (IDX datasets).
    #[arg(long)]
    pub test_limit: Option<usize>,
}

/// Flags mirroring the remaining config keys.
#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub name: Option<String>,

    /// Hidden layers x units, e.g. 3x256.
    #[arg(long)]
    pub arch: Option<Architecture>,

    /// Dropout after each hidden layer; 0 disables.
    #[arg(long)]
    pub dropout: Option<f64>,

    /// Train on hard labels only.
    #[arg(long, conflicts_with_all = ["beta", "gamma", "burn_in", "epochs_per_step"])]
    pub no_softtarget: bool,

    #[arg(long)]
    pub beta: Option<f64>,

    #[arg(long)]
    pub gamma: Option<f64>,

    #[arg(long)]
    pub burn_in: Option<usize>,

    #[arg(long)]
    pub epochs_per_step: Option<usize>,

    #[arg(long)]
    pub rho: Option<f64>,

    #[arg(long)]
    pub eps: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Extra epochs to checkpoint, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub checkpoint_epochs: Option<Vec<usize>>,

    /// Write the prediction average at every time-step.
    #[arg(long)]
    pub dump_soft_targets: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: ConfigArgs,

    #[command(flatten)]
    pub overrides: Overrides,

    /// Output directory; defaults to runs/<name>.
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,

    /// Print the resolved config and exit.
    #[arg(long)]
    pub print_config: bool,

    /// No per-epoch progress.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub source: ConfigArgs,

    #[command(flatten)]
    pub overrides: Overrides,

    /// Architectures, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub archs: Vec<Architecture>,

    /// Regimes: vanilla, dropout:P, softtarget, softtarget+dropout:P.
    #[arg(long, value_delimiter = ',', default_value = "vanilla,softtarget")]
    pub regimes: Vec<Regime>,

    /// Seeds, comma separated; defaults to the config's seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,

    #[arg(long, short)]
    pub output_dir: PathBuf,

    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, short)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Checkpoint files, or run directories whose checkpoint_<epoch>.bin
    /// files are analyzed in epoch order.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    /// Dataset config; defaults to the report.json beside the checkpoints.
    #[command(flatten)]
    pub source: ConfigArgs,

    #[arg(long, value_enum, default_value = "train")]
    pub split: Split,

    /// Use only the first N samples of the split.
    #[arg(long)]
    pub limit: Option<usize>,

    /// One-hot the predictions before taking covariances.
    #[arg(long)]
    pub binarize: bool,

    /// Where colabel CSVs go; defaults to each checkpoint's directory.
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// report.json files, or directories searched recursively for them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    #[arg(long)]
    pub markdown: Option<PathBuf>,

    #[arg(long)]
    pub csv: Option<PathBuf>,
}
