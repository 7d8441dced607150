use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Optimal power-divergence spatial prediction.
///
/// Every subcommand accepts `--config FILE`, a key=value file whose keys are
/// the long flag names; flags given on the command line take precedence.
#[derive(Debug, Parser)]
#[command(name = "opd", version, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate σ²_ε, the semivariogram and the trend; write a model file.
    Fit(FitArgs),
    /// OPD predictor with bias, RMSPE, ELP, ELJ and an interval per grid point.
    Predict(PredictArgs),
    /// Conditional and unconditional intervals over a λ list.
    Intervals(IntervalsArgs),
    /// Leave-one-out coverage of the intervals on the model's data.
    Coverage(CoverageArgs),
    /// Synthetic data from the log-Gaussian model.
    Simulate(SimulateArgs),
    /// Asymmetry curves A(f) for PDL and classical losses.
    Asymmetry(AsymmetryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JointArg {
    Reduced,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Conditional,
    Unconditional,
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value settings file; spliced in before the command-line flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file: CSV, or the model file for `fit` (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Monte Carlo draws per cut-off.
    #[arg(long = "M", default_value_t = 100_000)]
    pub m: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Unconditional sampler: exact bivariate reduction or full joint draws.
    #[arg(long, value_enum, default_value_t = JointArg::Reduced)]
    pub joint: JointArg,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Observations: coordinates, value and covariate columns.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Duplicate measurements (columns z1,z2) for the σ²_ε estimate.
    #[arg(long)]
    pub duplicates: Option<PathBuf>,
    /// σ²_ε when no duplicates file is given.
    #[arg(long = "sigma2-eps")]
    pub sigma2_eps: Option<f64>,
    /// Covariate spec, e.g. "dist,soil:cat,ffreq:cat,x:std".
    #[arg(long, default_value = "")]
    pub covariates: String,
    /// Coordinate columns.
    #[arg(long, default_value = "x,y")]
    pub coords: String,
    /// Value column.
    #[arg(long, default_value = "value")]
    pub value: String,
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
    /// Largest lag in the empirical semivariogram (default: half the largest distance).
    #[arg(long = "max-lag")]
    pub max_lag: Option<f64>,
    #[arg(long = "min-pairs", default_value_t = 30)]
    pub min_pairs: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long = "max-iter", default_value_t = 50)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub mc: MonteCarloArgs,
    /// Model file written by `opd fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Prediction locations with the covariate source columns.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// A number, `calibrate:q`, or `select-by-width`.
    #[arg(long, default_value = "-0.5", allow_hyphen_values = true)]
    pub lambda: String,
    /// λ grid for `select-by-width`, as start:stop:step.
    #[arg(long = "lambda-grid", default_value = "-3:3:0.5", allow_hyphen_values = true)]
    pub lambda_grid: String,
    /// Random reference points added to the 5 fixed ones for `select-by-width`.
    #[arg(long = "reference-random", default_value_t = 10)]
    pub reference_random: usize,
    /// Cut-off used for the reported interval.
    #[arg(long, value_enum, default_value_t = KindArg::Unconditional)]
    pub interval: KindArg,
}

#[derive(Debug, Args)]
pub struct IntervalsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub mc: MonteCarloArgs,
    /// Model file written by `opd fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Comma-separated λ values or start:stop:step.
    #[arg(long, default_value = "-3:3:1", allow_hyphen_values = true)]
    pub lambda: String,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub mc: MonteCarloArgs,
    /// Model file written by `opd fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated λ values or start:stop:step.
    #[arg(long, default_value = "-3:3:1", allow_hyphen_values = true)]
    pub lambda: String,
    /// Re-estimate β and θ for every left-out site.
    #[arg(long = "loocv-refit")]
    pub loocv_refit: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Sites: coordinate and covariate source columns.
    #[arg(long)]
    pub sites: Option<PathBuf>,
    #[arg(long, default_value = "")]
    pub covariates: String,
    #[arg(long, default_value = "x,y")]
    pub coords: String,
    /// Trend coefficients, one per encoded column.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    #[arg(long = "sigma2-eta")]
    pub sigma2_eta: Option<f64>,
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long = "sigma2-xi", default_value_t = 0.0)]
    pub sigma2_xi: f64,
    #[arg(long = "sigma2-eps", default_value_t = 0.0)]
    pub sigma2_eps: f64,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AsymmetryArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated λ values or start:stop:step.
    #[arg(long, default_value = "-3:3:1", allow_hyphen_values = true)]
    pub lambda: String,
    /// Classical losses: sel, ael, arl, qtl:q.
    #[arg(long, default_value = "")]
    pub classical: String,
    /// f grid as start:stop:step, strictly inside (0, 1).
    #[arg(long, default_value = "0.01:0.99:0.01")]
    pub f: String,
}
