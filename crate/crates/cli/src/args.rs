use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fsacnn::actnet::BranchMode;
use fsacnn::evaluation::LengthMode;
use fsacnn::model::ModelConfig;
use fsacnn::skeleton::AugmentConfig;
use fsacnn::training::{AdamConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "fsacnn", version, about = "Four-stream skeleton action recognition experiments")]
pub struct Cli {
    /// Cap on worker threads (default: one per core)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic skeleton corpus with its manifest
    Synth(SynthArgs),
    /// Frame-length and motion statistics of a corpus
    Stats(StatsArgs),
    /// Train a model on one protocol split
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split's test subjects
    Eval(EvalArgs),
    /// Accuracy of a frozen checkpoint at fixed input lengths
    Sweep(SweepArgs),
    /// Train elderly, adult and mixed models and cross-evaluate them
    Crossage(CrossAgeArgs),
    /// Late fusion of two checkpoints over parallel modalities
    Fuse(FuseArgs),
    /// Finite-difference gradient check on random layers or models
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the sequences and manifest.tsv
    #[arg(long)]
    pub out: PathBuf,
    /// Number of subjects (even; the first half are elderly)
    #[arg(long, default_value_t = 100)]
    pub subjects: usize,
    /// Number of action classes
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Recordings per subject and class
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated action ids to leave out
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<usize>,
    /// Report elderly and adult groups separately
    #[arg(long)]
    pub by_age: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    Shared,
    PerNode,
}

impl From<Branch> for BranchMode {
    fn from(b: Branch) -> Self {
        match b {
            Branch::Shared => BranchMode::Shared,
            Branch::PerNode => BranchMode::PerNode,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Output channels per conv block, comma-separated
    #[arg(long, value_delimiter = ',', default_values_t = vec![32, 64, 128])]
    pub widths: Vec<usize>,
    /// Temporal kernel width
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    /// Polynomial order K of every activation network
    #[arg(long, default_value_t = 3)]
    pub order: u32,
    #[arg(long, default_value_t = 1)]
    pub short_gap: usize,
    #[arg(long, default_value_t = 5)]
    pub long_gap: usize,
    /// Coordinate dimensions seen by the model (2 projects onto x, y)
    #[arg(long, default_value_t = 3)]
    pub dims: usize,
    /// Bodies per frame
    #[arg(long, default_value_t = 1)]
    pub bodies: usize,
    /// Separate backbones for the short and long temporal streams
    #[arg(long)]
    pub separate_temporal: bool,
    /// Branch network variant
    #[arg(long, value_enum, default_value_t = Branch::Shared)]
    pub branch: Branch,
}

impl ModelArgs {
    pub fn config(&self, n_classes: usize) -> ModelConfig {
        ModelConfig {
            widths: self.widths.clone(),
            kernel: self.kernel,
            order: self.order,
            short_gap: self.short_gap,
            long_gap: self.long_gap,
            n_classes,
            dims: self.dims,
            bodies: self.bodies,
            share_temporal_streams: !self.separate_temporal,
            branch: self.branch.into(),
            ..ModelConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    /// Gradient clipping norm; 0 disables clipping
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    /// Shortest training length drawn per sample
    #[arg(long, default_value_t = 32)]
    pub lmin: usize,
    /// Longest training length drawn per sample
    #[arg(long, default_value_t = 128)]
    pub lmax: usize,
    /// Rotation range about the vertical axis, in degrees
    #[arg(long, default_value_t = 30.0)]
    pub rotation: f64,
    #[arg(long, default_value_t = 0.9)]
    pub bone_scale_min: f64,
    #[arg(long, default_value_t = 1.1)]
    pub bone_scale_max: f64,
    /// Standard deviation of coordinate noise
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Seed for weight initialisation and training
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl OptimArgs {
    pub fn config(&self, eval_each_epoch: bool) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            length_range: (self.lmin, self.lmax),
            augment: AugmentConfig {
                rotation_deg: self.rotation,
                bone_scale: (self.bone_scale_min, self.bone_scale_max),
                noise_sigma: self.noise,
            },
            seed: self.seed,
            clip_norm: (self.clip > 0.0).then_some(self.clip),
            eval_each_epoch,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// cs, age:elderly, age:adult or age:mixed
    #[arg(long, default_value = "cs")]
    pub split: String,
    /// Checkpoint path
    #[arg(long)]
    pub out: PathBuf,
    /// History TSV path (default: <OUT>.history.tsv)
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Classes in the model head (default: highest action id in the manifest + 1)
    #[arg(long)]
    pub classes: Option<usize>,
    /// Evaluate on the test subjects after every epoch
    #[arg(long)]
    pub eval_each_epoch: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// cs, age:elderly, age:adult or age:mixed
    #[arg(long, default_value = "cs")]
    pub split: String,
    /// `native` or a fixed frame count (evenly spaced resampling)
    #[arg(long, default_value = "native", value_parser = parse_length)]
    pub length: LengthMode,
    /// Also write the report to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "cs")]
    pub split: String,
    /// Ascending fixed lengths, comma-separated
    #[arg(long, value_delimiter = ',', default_values_t = vec![16, 32, 48, 64, 96, 128])]
    pub lengths: Vec<usize>,
    /// Add a row for native-length evaluation
    #[arg(long)]
    pub native: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossAgeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Save the three trained checkpoints in this directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Classes in the model head (default: highest action id in the manifest + 1)
    #[arg(long)]
    pub classes: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub ckpt_a: PathBuf,
    #[arg(long)]
    pub ckpt_b: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Separate corpus for model B, paired with the first by file stem
    /// (default: both models read --manifest)
    #[arg(long)]
    pub manifest_b: Option<PathBuf>,
    #[arg(long, default_value = "cs")]
    pub split: String,
    /// Weight of model A's probabilities
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,
    #[arg(long, default_value = "native", value_parser = parse_length)]
    pub length: LengthMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    Layer,
    Model,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = Scope::Model)]
    pub scope: Scope,
    /// Number of random seeds, starting at --seed
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_length(s: &str) -> Result<LengthMode, String> {
    s.parse().map_err(|e: fsacnn::Error| e.to_string())
}
