use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use latent_bma::sim::Preset;
use latent_bma::{Criterion, Family, Method};

#[derive(Parser, Debug)]
#[command(name = "latent-bma", version, about = "Variational Bayesian model averaging for latent Gaussian regression")]
pub struct Cli {
    /// Worker threads for site updates and chains (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Plain `key = value` file supplementing the flags; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit one model and write its variational parameters.
    Fit(FitArgs),
    /// Evaluate every model (p ≤ 20) and summarize.
    Enumerate(SearchArgs),
    /// Metropolis–Hastings search over models.
    Explore(ExploreArgs),
    /// Draw a synthetic dataset.
    Simulate(SimulateArgs),
    /// Summary tables from an `enumerate` or `explore` output directory.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the outcome column.
    #[arg(long)]
    pub outcome: String,
    #[arg(long)]
    pub family: Family,
    /// Tobit censoring point (default: smallest outcome).
    #[arg(long)]
    pub y_lower: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "vb")]
    pub method: Method,
    #[arg(long, default_value = "vbc")]
    pub criterion: Criterion,
    /// g-prior scale (default: n).
    #[arg(long)]
    pub g: Option<f64>,
    /// Prior mean model size (default: p/2).
    #[arg(long)]
    pub prior_mean_size: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Plain CAVI sweeps without fixed-point acceleration.
    #[arg(long)]
    pub no_accelerate: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Inclusion bit string, covariate 1 first (default: all covariates).
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Largest p enumerated.
    #[arg(long, default_value_t = 20)]
    pub cap: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Models recorded per chain after burn-in.
    #[arg(long, default_value_t = 10_000)]
    pub keep: usize,
    #[arg(long, default_value_t = 2_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Share the evidence memo across chains (faster, not bit-reproducible for VB).
    #[arg(long)]
    pub share_memo: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub family: Family,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value = "sparse")]
    pub preset: Preset,
    #[arg(long, default_value_t = 0.25)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// True σ² (default: 1, or 0.1 for pln).
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub y_lower: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Output directory of `enumerate` or `explore`.
    #[arg(long)]
    pub from: PathBuf,
    /// Where to write the tables (default: `<from>/report`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: latent_bma::report::ReportFormat,
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
}
