use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Online fountain codes with feedback: closed-form predictions, Monte Carlo
/// simulation and framed file transfer.
///
/// Defaults follow the reference experiments: k = 1000 and eps = 0 for
/// curve runs, beta0 = 0.5, delta-p = 0.01. Use --k 512 --eps 0.1 for the
/// overhead/feedback table setting.
#[derive(Debug, Parser)]
#[command(name = "fountain-lab", version)]
pub struct Cli {
    /// Worker threads for Monte Carlo trials (0 = all cores). Output does
    /// not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Ofc,
    Ofcnb,
    Sofc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Every,
    Threshold,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form expected transmissions for every recovered count.
    Predict(PredictArgs),
    /// Monte Carlo simulation; CSV curve or JSON summary.
    Simulate(SimulateArgs),
    /// Relative error between simulated and closed-form curves.
    Compare(SimulateArgs),
    /// SOFC vs OFC full-recovery cost across erasure rates.
    Sweep(SweepArgs),
    /// Send a file through the framed lossy link and write what arrives.
    Transfer(TransferArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SchemeArgs {
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,

    /// Degree-1 fraction for ofcnb (required for ofcnb only).
    #[arg(long)]
    pub gamma0: Option<f64>,

    /// Build-up target for ofc.
    #[arg(long)]
    pub beta0: Option<f64>,

    #[arg(long, default_value_t = 1000)]
    pub k: usize,

    /// Channel erasure rate.
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,

    #[arg(long, value_enum, default_value_t = PolicyArg::Every)]
    pub policy: PolicyArg,

    /// Usefulness gain required by the threshold policy.
    #[arg(long)]
    pub delta_p: Option<f64>,

    #[arg(long, default_value_t = 200)]
    pub trials: usize,

    #[arg(long, env = "FOUNTAIN_LAB_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Maximum transmissions per trial (default 50 * k).
    #[arg(long)]
    pub budget: Option<u64>,

    /// Payload bytes per symbol; 0 simulates without payloads.
    #[arg(long, default_value_t = 0)]
    pub symbol_size: usize,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 1000)]
    pub k: usize,

    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.3267, 0.38, 0.5])]
    pub eps_list: Vec<f64>,

    #[arg(long, default_value_t = 200)]
    pub trials: usize,

    #[arg(long, env = "FOUNTAIN_LAB_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long = "in")]
    pub input: PathBuf,

    /// Where the reconstructed file is written.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, value_enum)]
    pub scheme: SchemeArg,

    #[arg(long)]
    pub gamma0: Option<f64>,

    #[arg(long)]
    pub beta0: Option<f64>,

    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,

    #[arg(long, env = "FOUNTAIN_LAB_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 1024)]
    pub symbol_size: usize,

    /// Also write the transfer report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}
