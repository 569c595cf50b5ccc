//! Command-line surface. Numeric flags are optional: when absent, the value
//! comes from `--config` or, failing that, from the module default.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mpe", version, about = "Multi-property extraction toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration; flags win over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Gen(GenArgs),
    /// Merge single-property records into multi-property records.
    Merge(MergeArgs),
    /// Controlled train/validation/test split.
    Split(SplitArgs),
    /// Report article overlap and held-out constraints of existing splits.
    Audit(AuditArgs),
    /// Label evaluation instances with diagnostic subsets.
    Diagnose(DiagnoseArgs),
    /// Train the subword vocabulary.
    Tokenize(TokenizeArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Score a checkpoint or a predictions file.
    Evaluate(EvaluateArgs),
    /// Run a hyperparameter study.
    Hpo(HpoArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Merge(_) => "merge",
            Command::Split(_) => "split",
            Command::Audit(_) => "audit",
            Command::Diagnose(_) => "diagnose",
            Command::Tokenize(_) => "tokenize",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Hpo(_) => "hpo",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub articles: Option<usize>,
    /// Size of the property inventory.
    #[arg(long)]
    pub properties: Option<usize>,
    #[arg(long)]
    pub name_pool: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Record stream whose records each carry one property.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub test_only_fraction: Option<f64>,
    #[arg(long)]
    pub val_only_fraction: Option<f64>,
    #[arg(long)]
    pub shared_fraction: Option<f64>,
    #[arg(long)]
    pub seen_articles: Option<usize>,
    #[arg(long)]
    pub max_eval_articles: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Assignment file written by `split`; enables held-out checks.
    #[arg(long, requires = "assignment_properties")]
    pub assignment: Option<PathBuf>,
    #[arg(long, requires = "assignment")]
    pub assignment_properties: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Unit {
    Pairs,
    Articles,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Properties seen fewer times than this in train are rare.
    #[arg(long)]
    pub rare_threshold: Option<usize>,
    #[arg(long)]
    pub entropy_threshold: Option<f64>,
    /// Articles with more words than this are long.
    #[arg(long, conflicts_with = "long_percentile")]
    pub long_words: Option<usize>,
    /// Articles longer than this percentile of train lengths are long.
    #[arg(long)]
    pub long_percentile: Option<f64>,
    #[arg(long, value_enum)]
    pub frequency_unit: Option<Unit>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Split to label.
    #[arg(long)]
    pub eval: PathBuf,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub architecture: Option<String>,
    #[arg(long)]
    pub max_source_len: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub validate_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Split to score.
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long, requires = "vocab", required_unless_present = "predictions")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Score an existing predictions file instead of decoding.
    #[arg(long, conflicts_with_all = ["checkpoint", "vocab", "beam"])]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub beam: Option<usize>,
    /// Diagnostic labels from `diagnose`.
    #[arg(long, conflicts_with = "train")]
    pub labels: Option<PathBuf>,
    /// Training split; labels are computed from it when given.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Objective {
    /// Train and validate a model per trial.
    Train,
    /// -(x - 3)^2 over x in [0, 10]; checks the sampler without training.
    Quadratic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SamplerArg {
    Tpe,
    Random,
}

#[derive(Debug, Args)]
pub struct HpoArgs {
    #[arg(long, value_enum, default_value = "train")]
    pub objective: Objective,
    #[arg(long)]
    pub n_trials: Option<usize>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    /// `desk`, `paper` or a search-space JSON file.
    #[arg(long, default_value = "desk")]
    pub space: String,
    #[arg(long, required_if_eq("objective", "train"))]
    pub train: Option<PathBuf>,
    #[arg(long, required_if_eq("objective", "train"))]
    pub validation: Option<PathBuf>,
    #[arg(long, required_if_eq("objective", "train"))]
    pub vocab: Option<PathBuf>,
    /// Training steps per trial.
    #[arg(long)]
    pub trial_steps: Option<u64>,
}
