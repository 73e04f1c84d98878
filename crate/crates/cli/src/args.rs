//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "bconcord",
    version,
    about = "Bayesian sparsity selection for precision matrices (CONCORD likelihood)"
)]
pub struct Cli {
    /// Worker threads for chains, replicates and enumeration [default: available cores]
    #[arg(long, global = true, env = "BCONCORD_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sparse truth and Gaussian data from it
    Simulate(SimulateArgs),
    /// Run the spike-and-slab or horseshoe sampler and select edges
    Fit(FitArgs),
    /// Re-estimate the entries of a selected graph
    Refit(RefitArgs),
    /// Exact posterior over all sparsity patterns (small p)
    Enumerate(EnumerateArgs),
    /// Edge-recovery accuracy of a selected graph against a truth
    Eval(EvalArgs),
    /// Replicated simulate/fit/evaluate runs from a TOML spec
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiagRuleArg {
    Dominance,
    EigenShift,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub n: usize,
    /// Fraction of nonzero upper off-diagonal entries
    #[arg(long)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Prefix for truth.csv, data.csv and truth_pattern.json
    #[arg(long)]
    pub out_prefix: String,
    #[arg(long, value_enum, default_value = "dominance")]
    pub diag_rule: DiagRuleArg,
    /// Diagonal margin for the chosen rule [default: 0.5 dominance, 0.1 eigen-shift]
    #[arg(long)]
    pub margin: Option<f64>,
}

/// Observations or a covariance matrix.
#[derive(Debug, Args, Clone)]
pub struct InputArgs {
    /// n×p data CSV, one observation per row
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// p×p sample covariance CSV (requires --n)
    #[arg(long)]
    pub cov: Option<PathBuf>,
    /// Sample size behind --cov
    #[arg(long)]
    pub n: Option<usize>,
    /// The data CSV starts with a header row
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prior {
    SpikeSlab,
    Horseshoe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagModeArg {
    PointMass,
    Discretized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroRuleArg {
    Prior,
    Formula,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// TOML file with defaults for any of the options below
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub prior: Option<Prior>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub keep: Option<usize>,
    /// Prior slab probability [default: 0.5]
    #[arg(long)]
    pub q: Option<f64>,
    /// Gamma shape of the hyperprior on λ and γ [default: 1e-4]
    #[arg(long)]
    pub r: Option<f64>,
    /// Gamma rate of the hyperprior on λ and γ [default: 1e-8]
    #[arg(long)]
    pub s: Option<f64>,
    /// Initial (or, with --fixed, constant) slab precision [default: 1]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Initial (or constant) diagonal rate [default: 1]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Keep λ and γ fixed instead of drawing them from their conditionals
    #[arg(long)]
    pub fixed: bool,
    /// λ update for entries currently at zero [default: prior]
    #[arg(long, value_enum)]
    pub zero_rule: Option<ZeroRuleArg>,
    /// Cap on the number of nonzero off-diagonal entries
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long, value_enum)]
    pub diag_mode: Option<DiagModeArg>,
    /// Inclusion-probability threshold for selection [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Credible level for horseshoe intervals [default: 0.95]
    #[arg(long)]
    pub ci: Option<f64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// JSON with `p` and `edges` (a graph file or a fit output)
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Smallest eigenvalue after positive-definite projection [default: 1e-6]
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub ci: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub cov: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// Diagonal values (p numbers, one row or one column)
    #[arg(long)]
    pub diag: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long)]
    pub tau: Option<usize>,
    /// Number of most probable patterns to report
    #[arg(long, default_value_t = 50)]
    pub top: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Selected graph (graph JSON or fit output)
    #[arg(long)]
    pub selected: PathBuf,
    /// True graph (truth_pattern.json)
    #[arg(long)]
    pub truth: PathBuf,
    /// Fit or refit output holding an estimate
    #[arg(long, requires = "truth_matrix")]
    pub est: Option<PathBuf>,
    /// True precision matrix CSV
    #[arg(long, requires = "est")]
    pub truth_matrix: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
