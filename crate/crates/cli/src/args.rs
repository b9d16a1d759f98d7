use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use diffmel_core::schedule::{DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_NUM_STEPS};

use crate::manifest::PredictorKind;

pub const OUT_DIR_ENV: &str = "DIFFMEL_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "diffmel",
    version,
    about = "Diffusion mel-spectrogram sampler toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a noise schedule file.
    Schedule(ScheduleArgs),
    /// Draw samples and write tensor files plus a run manifest.
    Sample(SampleArgs),
    /// Train the toy denoiser on the conditional Gaussian task.
    TrainToy(TrainToyArgs),
    /// Time sampling for several decimation factors.
    Bench(BenchArgs),
    /// Run the acceptance criteria and print a pass/fail table.
    Verify(VerifyArgs),
    /// Compare toy-denoiser gradients with finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleOpts {
    /// Number of diffusion steps T.
    #[arg(long = "steps", default_value_t = DEFAULT_NUM_STEPS)]
    pub num_steps: usize,
    #[arg(long, default_value_t = DEFAULT_BETA_START)]
    pub beta_start: f64,
    #[arg(long, default_value_t = DEFAULT_BETA_END)]
    pub beta_end: f64,
    /// Load the schedule from a file instead (overrides the three flags above).
    #[arg(long)]
    pub schedule: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OutDir {
    #[arg(long, env = OUT_DIR_ENV, default_value = "diffmel-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    #[arg(long = "steps", default_value_t = DEFAULT_NUM_STEPS)]
    pub num_steps: usize,
    #[arg(long, default_value_t = DEFAULT_BETA_START)]
    pub beta_start: f64,
    #[arg(long, default_value_t = DEFAULT_BETA_END)]
    pub beta_end: f64,
    /// Output path; defaults to `<out-dir>/schedule.txt`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub schedule: ScheduleOpts,
    /// Decimation factor γ.
    #[arg(long, default_value_t = 1)]
    pub gamma: usize,
    /// Temperature η.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub eta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "analytic")]
    pub predictor: PredictorKind,
    /// Toy parameter file written by `train-toy`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Run chains on the thread pool; output is unchanged.
    #[arg(long)]
    pub parallel: bool,
    /// Data mean for the analytic predictor.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// Data standard deviation for the analytic predictor.
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    /// Condition every frame on this label (toy predictor).
    #[arg(long)]
    pub label: Option<usize>,
    /// Re-run exactly the configuration recorded in a manifest.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args)]
pub struct TrainToyArgs {
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    pub items_per_step: usize,
    /// Training items in the synthetic dataset.
    #[arg(long, default_value_t = 256)]
    pub items: usize,
    #[arg(long, default_value_t = 32)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 7, 21, 57])]
    pub gammas: Vec<usize>,
    #[arg(long, default_value_t = 80)]
    pub channels: usize,
    #[arg(long, default_value_t = 400)]
    pub frames: usize,
    /// Timed repeats per γ (at least 5).
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value = "analytic")]
    pub predictor: PredictorKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path; defaults to `<out-dir>/bench.csv`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Recorded in the report; the criteria use fixed internal seeds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Schedule file used by the schedule-generic criteria (1 and 2).
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Run only these criteria (comma-separated numbers).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GradCheckArgs {
    /// Toy parameter file; a freshly trained network is used otherwise.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-5)]
    pub perturbation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
