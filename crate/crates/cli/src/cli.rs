use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{BackendKind, ScheduleKind};

/// Entropy-controlled diffusion sampling lab for Gaussian-mixture targets.
///
/// Exit status: 0 on success, 1 when a checked invariant fails (or on an I/O
/// error), 2 on a configuration or usage error.
#[derive(Debug, Parser)]
#[command(name = "entsamp", version)]
pub struct Cli {
    /// Worker threads; results do not depend on this
    #[arg(long, global = true, env = "ENTSAMP_THREADS")]
    pub threads: Option<usize>,
    /// Print the report as JSON on stdout instead of CSV
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate mmse(η), I(η) and ½∫mmse against the entropy envelope
    MmseCurve(CurveArgs),
    /// Print a reverse-time grid and its bound report
    Grid(GridArgs),
    /// Run the reverse sampler and write the final states
    Sample(SampleArgs),
    /// Run the invariant suite; exits 1 if any check fails
    Verify(VerifyArgs),
    /// MMSE area of entropy-adaptive grids across K and embedding dimension
    ScaleStudy(ScaleArgs),
    /// Evaluate the KL bound for (H, R, T, δ, ε, K)
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (TOML, `version = 1`)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model document (TOML); replaces the config's model block
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Root seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path (defaults to `<run.outputs>/<subcommand>.csv`, else stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    /// Grid family
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleKind>,
    /// Number of steps
    #[arg(long = "K")]
    pub steps: Option<usize>,
    /// Horizon T
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Early-stopping time δ
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Channel backend
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Monte Carlo draws per estimate
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub eta_min: Option<f64>,
    #[arg(long)]
    pub eta_max: Option<f64>,
    /// Number of log-spaced η values
    #[arg(long)]
    pub points: Option<usize>,
    /// Log-λ cells per decade for the I-MMSE integral
    #[arg(long)]
    pub cells_per_decade: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Number of sampler paths
    #[arg(long)]
    pub n: Option<usize>,
    /// Also write the full trajectory to this binary file
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Quick,
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "quick")]
    pub suite: Suite,
    /// Root seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path (default stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Horizon T
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Early-stopping time δ
    #[arg(long)]
    pub delta: Option<f64>,
    /// Step counts, comma separated
    #[arg(long = "K", value_delimiter = ',')]
    pub steps: Option<Vec<usize>>,
    /// Embedding dimensions, comma separated
    #[arg(long = "d", value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Monte Carlo draws per area when no quadrature backend applies
    #[arg(long)]
    pub draws: Option<usize>,
    /// Gauss–Legendre nodes per cell
    #[arg(long)]
    pub quad_points: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub common: Common,
    /// Latent entropy H(J) in nats (taken from the model when omitted)
    #[arg(long = "H")]
    pub entropy: Option<f64>,
    /// Second moment R (taken from the model when omitted)
    #[arg(long = "R")]
    pub second_moment: Option<f64>,
    /// Horizon T
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Early-stopping time δ
    #[arg(long)]
    pub delta: Option<f64>,
    /// Noise level ε of the target
    #[arg(long)]
    pub eps: Option<f64>,
    /// Number of steps
    #[arg(long = "K")]
    pub steps: Option<usize>,
    /// Approximation energy e_apx
    #[arg(long, default_value_t = 0.0)]
    pub e_apx: f64,
}
