//! Command-line surface. Defaults shown by `--help` come from the library
//! constants; the values actually used are resolved in [`crate::settings`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use crof_core::adapter::{
    DEFAULT_EPOCHS, DEFAULT_HIDDEN_RATIO, DEFAULT_LAMBDA, DEFAULT_LR, DEFAULT_TAU,
    DEFAULT_WEIGHT_DECAY,
};
use crof_core::label_weighting::{DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_GAMMA, DEFAULT_TOP_K};
use crof_core::trainer::DEFAULT_BATCH_SIZE;

#[derive(Debug, Parser)]
#[command(name = "crof", version, about = "Noise-robust few-shot classification over frozen embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic few-shot dataset with its class prototypes.
    GenSynth(GenSynthArgs),
    /// Corrupt the train labels of a dataset.
    InjectNoise(InjectNoiseArgs),
    /// Fuse two class text embedding sets row by row.
    Fuse(FuseArgs),
    /// Print the description request for a language model.
    PromptRequest(PromptRequestArgs),
    /// Fine-tune the adapter and record per-epoch metrics.
    Train(TrainArgs),
    /// Train every (noise ratio, toggle set, seed) cell.
    Sweep(SweepArgs),
    /// Show the soft targets of a single sample.
    Weights(WeightsArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub dims: usize,
    /// Train samples per class.
    #[arg(long, default_value_t = 10)]
    pub shots: usize,
    #[arg(long, default_value_t = 50)]
    pub test_per_class: usize,
    /// Spread of the image embeddings around their prototype.
    #[arg(long, default_value_t = 0.4)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InjectNoiseArgs {
    /// Dataset directory (as written by gen-synth).
    #[arg(long)]
    pub data: PathBuf,
    /// Noise model: symmetric or asymmetric.
    #[arg(long, default_value = "symmetric")]
    pub kind: String,
    /// Fraction of train labels corrupted per class.
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train samples per class; read from the dataset manifest when omitted.
    #[arg(long)]
    pub shots: Option<usize>,
    /// Output directory for noisy_labels.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Supplementary description embeddings.
    #[arg(long)]
    pub sup: PathBuf,
    /// Baseline description embeddings.
    #[arg(long)]
    pub cafo: PathBuf,
    /// Rows per class in both inputs; groups are averaged before fusion.
    #[arg(long, default_value_t = 1)]
    pub per_class: usize,
    /// Fused embeddings file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the fused inter-class similarity matrix as CSV.
    #[arg(long)]
    pub similarity: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PromptRequestArgs {
    /// Task target, e.g. "flower".
    #[arg(long)]
    pub target: String,
    /// Class-name file, one name per line.
    #[arg(long)]
    pub classes: PathBuf,
    /// Write to a file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Hyper-parameters shared by `train` and `sweep`.
#[derive(Debug, Args)]
pub struct HyperArgs {
    /// `key = value` file; command-line flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Loyalty to the annotated label.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Share of the remaining mass given to the top-1 class.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    /// Decay of the loyalty with rank.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Candidate classes per sample.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub topk: usize,
    /// Softmax temperature.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Residual mixing ratio of the adapter.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_WEIGHT_DECAY)]
    pub weight_decay: f64,
    /// Hidden width is dims / hidden-ratio.
    #[arg(long, default_value_t = DEFAULT_HIDDEN_RATIO)]
    pub hidden_ratio: usize,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    /// Samples per optimizer step; 0 uses the whole train split.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Label weighting used when weighting is on.
    #[arg(long, default_value = "topk")]
    pub weighting: String,
    #[arg(long, default_value = "ce")]
    pub base_loss: String,
    /// Noise model for in-process noise injection.
    #[arg(long, default_value = "symmetric")]
    pub noise: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Dataset directory (as written by gen-synth).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Noisy train labels (as written by inject-noise); clean labels otherwise.
    #[arg(long)]
    pub noisy_labels: Option<PathBuf>,
    /// Plain class text embeddings; defaults to the dataset's prototypes.emb.
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Fused class text embeddings, required unless --no-tpg.
    #[arg(long)]
    pub fused: Option<PathBuf>,
    /// Train samples per class; read from the dataset manifest when omitted.
    #[arg(long)]
    pub shots: Option<usize>,
    /// Inject this much noise before training, seeded by --seed.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the plain text embeddings instead of the fused ones.
    #[arg(long)]
    pub no_tpg: bool,
    /// Skip fine-tuning and evaluate zero-shot.
    #[arg(long)]
    pub no_ft: bool,
    /// Train on one-hot noisy labels instead of soft targets.
    #[arg(long)]
    pub no_wt: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Dataset directory; a fresh synthetic dataset per seed when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[arg(long)]
    pub fused: Option<PathBuf>,
    #[arg(long)]
    pub shots: Option<usize>,
    /// Synthetic classes (without --data).
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    /// Synthetic dims (without --data).
    #[arg(long, default_value_t = 32)]
    pub dims: usize,
    /// Synthetic train samples per class (without --data).
    #[arg(long, default_value_t = 10)]
    pub synth_shots: usize,
    #[arg(long, default_value_t = 50)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 0.4)]
    pub sigma: f64,
    /// Comma-separated noise ratios.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
    pub deltas: Vec<f64>,
    /// Comma-separated toggle sets such as `ft`, `ft+wt`, `none`.
    #[arg(long, value_delimiter = ',', default_value = "ft,ft+wt")]
    pub toggles: Vec<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    /// Comma-separated logits of one sample.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub logits: Vec<f64>,
    /// Annotated class index.
    #[arg(long)]
    pub label: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub topk: usize,
    /// Class-name file; indices are printed otherwise.
    #[arg(long)]
    pub classes: Option<PathBuf>,
}
