//! Subcommand definitions and dispatch.
//!
//! Conventions shared by every command: `--seed` is mandatory (all
//! randomness derives from it), tunables resolve flag > config file >
//! default, outputs land in `--out` (or `ESE_OUT_DIR`) under derived file
//! names, and every artifact gets a JSON sidecar with the config hash and
//! seed.

pub mod align;
pub mod embed;
pub mod ensemble;
pub mod eval;
pub mod report;
pub mod synth;
pub mod train_encoder;
pub mod wse;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ese_core::contrastive::{
    InfoNceConfig, OptimizerKind, PositivePairPolicy, TrainConfig, TrainingSet,
};
use ese_core::data::augment::DEFAULT_MAX_ROTATION_DEGREES;
use ese_core::data::{to_three_channel, LabeledDataset, SplitTag};
use ese_core::error::{Error, Result};

use crate::config::{parse_list, pick, FileConfig};

#[derive(Parser)]
#[command(
    name = "ese",
    version,
    about = "Embedding-space ensemble pipeline: synth, train, embed, align, ensemble, eval, report"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic world of rotated copies of shared latents.
    Synth(synth::SynthArgs),
    /// Contrastively train one or more MLP encoders on digit images.
    TrainEncoder(train_encoder::TrainEncoderArgs),
    /// Embed an image set with trained encoders, optionally OOD-transformed.
    Embed(embed::EmbedArgs),
    /// Learn orthogonal alignment maps from member embeddings to an anchor.
    Align(align::AlignArgs),
    /// Karcher-average member embeddings, aligned or raw.
    Ensemble(ensemble::EnsembleArgs),
    /// Weight-space ensembles: naive averaging or the shared-init protocol.
    Wse(wse::WseArgs),
    /// Retrieval metrics for labeled embedding files.
    Eval(eval::EvalArgs),
    /// Aggregate embeddings into the comparison table (CSV + markdown).
    Report(report::ReportArgs),
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => synth::run(args),
        Command::TrainEncoder(args) => train_encoder::run(args),
        Command::Embed(args) => embed::run(args),
        Command::Align(args) => align::run(args),
        Command::Ensemble(args) => ensemble::run(args),
        Command::Wse(args) => wse::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Report(args) => report::run(args),
    }
}

/// Hyperparameters shared by `train-encoder` and `wse --mode star`.
#[derive(Args, Debug, Clone)]
pub struct TrainFlags {
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Optimizer step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Optimizer: adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// InfoNCE softmax temperature.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Negatives per anchor.
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Positive views are rotations within this many degrees.
    #[arg(long)]
    pub max_rotation: Option<f64>,
}

pub struct ResolvedTrain {
    pub train: TrainConfig,
    pub nce: InfoNceConfig,
    pub max_rotation: f64,
}

impl TrainFlags {
    pub fn resolve(&self, file: &FileConfig, seed: u64) -> Result<ResolvedTrain> {
        let defaults = TrainConfig::default();
        let optimizer = match pick(self.optimizer.clone(), file.get("optimizer"), String::new())? {
            s if s.is_empty() => defaults.optimizer,
            s => s.parse::<OptimizerKind>()?,
        };
        let nce_defaults = InfoNceConfig::default();
        Ok(ResolvedTrain {
            train: TrainConfig {
                epochs: pick(self.epochs, file.get("epochs"), defaults.epochs)?,
                learning_rate: pick(
                    self.learning_rate,
                    file.get("learning-rate"),
                    defaults.learning_rate,
                )?,
                batch_size: pick(self.batch_size, file.get("batch-size"), defaults.batch_size)?,
                optimizer,
                seed,
            },
            nce: InfoNceConfig {
                temperature: pick(
                    self.temperature,
                    file.get("temperature"),
                    nce_defaults.temperature,
                )?,
                num_negatives: pick(self.negatives, file.get("negatives"), nce_defaults.num_negatives)?,
            },
            max_rotation: pick(
                self.max_rotation,
                file.get("max-rotation"),
                DEFAULT_MAX_ROTATION_DEGREES,
            )?,
        })
    }

    /// Resolved settings as hashable entries.
    pub fn hash_entries(resolved: &ResolvedTrain) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", resolved.train.epochs.to_string()),
            ("learning-rate", resolved.train.learning_rate.to_string()),
            ("batch-size", resolved.train.batch_size.to_string()),
            ("optimizer", format!("{:?}", resolved.train.optimizer)),
            ("temperature", resolved.nce.temperature.to_string()),
            ("negatives", resolved.nce.num_negatives.to_string()),
            ("max-rotation", resolved.max_rotation.to_string()),
        ]
    }
}

/// Image selection shared by commands that read an IDX pair.
#[derive(Args, Debug, Clone)]
pub struct DataFlags {
    /// Seeded subsample size; omitted means the full file.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Seed for the subsample draw, kept separate from `--seed` so several
    /// runs can share one corpus slice.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

/// Loads an IDX pair, subsamples, and widens to three channels so encoders
/// see the same input dimension in-distribution and under color transforms.
pub fn load_digits(
    images: &std::path::Path,
    labels: &std::path::Path,
    split: SplitTag,
    data: &DataFlags,
) -> Result<LabeledDataset> {
    let mut dataset = LabeledDataset::load_idx_pair(images, labels, split)?;
    if let Some(limit) = data.limit {
        if limit < dataset.len() {
            dataset = dataset.subsample(limit, data.data_seed)?;
        }
    }
    let widened = dataset
        .images
        .iter()
        .map(to_three_channel)
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(widened, dataset.labels, split)
}

/// Training set with image shape attached, ready for the rotation policy.
pub fn training_set(
    dataset: &LabeledDataset,
    max_degrees: f64,
) -> Result<(TrainingSet, PositivePairPolicy, usize)> {
    let (inputs, shape) = dataset.to_inputs()?;
    let input_dim = inputs.nrows();
    let set = TrainingSet::new(inputs)?.with_image_shape(shape)?;
    Ok((set, PositivePairPolicy::Rotation { max_degrees }, input_dim))
}

/// Runs `f(i)` for `i in 0..n` on a pool of `jobs` threads, preserving index
/// order in the output. Results do not depend on `jobs`.
pub fn run_jobs<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if jobs == 0 {
        return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
    }
    if jobs == 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.min(n))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build a {jobs}-thread pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(|i| f(i)).collect()
    })
}

pub fn parse_hidden(flag: Option<String>, file: &FileConfig) -> Result<Vec<usize>> {
    match flag.or(file.get::<String>("hidden")?) {
        Some(raw) => parse_list(&raw, "hidden layer widths"),
        None => Ok(vec![128, 64]),
    }
}

pub fn out_file(dir: &std::path::Path, name: &str) -> PathBuf {
    dir.join(name)
}
