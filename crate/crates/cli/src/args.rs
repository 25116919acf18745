use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "conjure", version, about = "Semantic distances from conditional reverse diffusions")]
pub struct Cli {
    /// Suppress the human-readable summary on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the toy conditional score network on samples from a world.
    TrainToy(TrainToyArgs),
    /// Distance between two prompts.
    Distance(DistanceArgs),
    /// All pairwise distances over a vocabulary.
    Matrix(MatrixArgs),
    /// Rank alignment against world ground truth or an annotated dataset.
    Eval(EvalArgs),
    /// Sweep one estimator setting and report alignment per value.
    Ablate(AblateArgs),
    /// Compare the estimator with analytic oracles.
    OracleCheck(OracleArgs),
    /// Validate a trace file and estimate the distance it records.
    IngestTrace(IngestArgs),
    /// Generate a hierarchical Gaussian world.
    GenWorld(GenWorldArgs),
}

/// Estimator and schedule settings. Unset flags fall back to `--config`,
/// then to built-in defaults.
#[derive(Debug, Args, Clone, Default)]
pub struct EstimatorArgs {
    /// Number of denoising steps.
    #[arg(long = "T", value_name = "T")]
    pub steps: Option<usize>,
    /// Monte-Carlo iterations.
    #[arg(long)]
    pub k: Option<usize>,
    /// Timestep prior: uniform, cumulative:<T'> or pointwise:<T'>.
    #[arg(long)]
    pub prior: Option<String>,
    /// Classifier-free guidance scale; 1 disables guidance.
    #[arg(long)]
    pub guidance: Option<f64>,
    /// Master seed [env: CONJURE_SEED, default 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub beta_min: Option<f64>,
    #[arg(long)]
    pub beta_max: Option<f64>,
    /// Flat key = value settings file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

/// Where scores come from. Exactly one must be given.
#[derive(Debug, Args, Clone)]
#[group(required = true, multiple = false)]
pub struct ModelSource {
    /// Analytic world: `default8` or a world JSON file.
    #[arg(long)]
    pub world: Option<String>,
    /// Trained toy network checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory of trace JSON-lines files.
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// `default8` or a world JSON file.
    #[arg(long)]
    pub world: String,
    /// Seed of a named world.
    #[arg(long, default_value_t = 0)]
    pub world_seed: u64,
    /// Training samples per leaf.
    #[arg(long, default_value_t = 1500)]
    pub per_leaf: usize,
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Checkpoint path.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Training report JSON (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub est: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Seed of a named world.
    #[arg(long, default_value_t = 0)]
    pub world_seed: u64,
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    /// conjure, kl, initial, final or output.
    #[arg(long)]
    pub method: Option<String>,
    /// Where to write the gap trace (conjure and kl only).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub est: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    /// Analytic world: `default8` or a world JSON file.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub world: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Seed of a named world.
    #[arg(long, default_value_t = 0)]
    pub world_seed: u64,
    #[arg(long)]
    pub method: Option<String>,
    /// Matrix CSV (stdout if omitted).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Heatmap SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Full matrix JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub est: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth world: `default8` or a world JSON file.
    #[arg(long, conflicts_with_all = ["traces", "dataset"], required_unless_present = "traces")]
    pub world: Option<String>,
    /// Seed of a named world.
    #[arg(long, default_value_t = 0)]
    pub world_seed: u64,
    /// Score with a trained network instead of the world's exact scores.
    #[arg(long, requires = "world")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of trace JSON-lines files.
    #[arg(long, requires = "dataset")]
    pub traces: Option<PathBuf>,
    /// Annotated pairs: tab-separated `a`, `b`, score in [0, 5].
    #[arg(long, requires = "traces")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub est: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// `default8` or a world JSON file.
    #[arg(long)]
    pub world: String,
    /// Seed of a named world.
    #[arg(long, default_value_t = 0)]
    pub world_seed: u64,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// prior, k or T.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values, e.g. `1,5,10` or `uniform,cumulative:4`.
    #[arg(long)]
    pub values: String,
    #[arg(long)]
    pub method: Option<String>,
    /// Line plot SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Keep per-value wall-clock times in the JSON report.
    #[arg(long)]
    pub timings: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub est: EstimatorArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("suite").required(true).multiple(true).args(["gaussian", "gmm"])))]
pub struct OracleArgs {
    /// Random Gaussian pairs against the closed form.
    #[arg(long)]
    pub gaussian: bool,
    /// Fixed mixture pairs against quadrature.
    #[arg(long)]
    pub gmm: bool,
    /// Number of random Gaussian cases.
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    /// Monte-Carlo iterations [default: 5 for Gaussian, 200 for mixtures].
    #[arg(long)]
    pub k: Option<usize>,
    /// Master seed [env: CONJURE_SEED, default 0].
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Trace file or directory of `*.jsonl` files.
    #[arg(long, required_unless_present = "schema")]
    pub trace: Option<PathBuf>,
    /// Treat validator warnings as errors.
    #[arg(long)]
    pub strict: bool,
    /// Print the JSON Schema of one trace line and exit.
    #[arg(long, conflicts_with_all = ["trace", "strict", "prior"])]
    pub schema: bool,
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenWorldArgs {
    /// Nested label tree, e.g. `((a,b),(c,d))`.
    #[arg(long, default_value = conjure::eval::DEFAULT8)]
    pub tree: String,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub radius_ratio: Option<f64>,
    #[arg(long)]
    pub leaf_scale: Option<f64>,
    #[arg(long)]
    pub angle_jitter: Option<f64>,
    #[arg(long, env = "CONJURE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
