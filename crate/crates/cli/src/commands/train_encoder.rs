use std::path::PathBuf;

use clap::Args;
use ese_core::contrastive::{train_encoder, Activation, MlpEncoder};
use ese_core::data::SplitTag;
use ese_core::error::Result;
use ese_core::io::{write_encoder, ArtifactMeta};

use crate::config::{config_hash, pick, resolve_out_dir, FileConfig};
use crate::commands::{load_digits, parse_hidden, run_jobs, training_set, DataFlags, TrainFlags};

#[derive(Args, Debug)]
pub struct TrainEncoderArgs {
    /// IDX image file (raw or gzipped).
    #[arg(long)]
    pub train_images: PathBuf,
    /// IDX label file.
    #[arg(long)]
    pub train_labels: PathBuf,
    #[command(flatten)]
    pub data: DataFlags,
    /// How many encoders to train; member i uses seed + i.
    #[arg(long)]
    pub members: Option<usize>,
    /// Embedding dimension D.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long)]
    pub hidden: Option<String>,
    /// Activation: relu or tanh.
    #[arg(long)]
    pub activation: Option<String>,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Threads for concurrent member training.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: TrainEncoderArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let members = pick(args.members, file.get("members"), 5)?;
    let dim = pick(args.dim, file.get("dim"), 16)?;
    let hidden = parse_hidden(args.hidden.clone(), &file)?;
    let activation = match pick(args.activation.clone(), file.get("activation"), String::new())? {
        s if s.is_empty() => Activation::Relu,
        s => s.parse::<Activation>()?,
    };
    let resolved = args.train.resolve(&file, args.seed)?;
    let out = resolve_out_dir(args.out)?;

    let dataset = load_digits(
        &args.train_images,
        &args.train_labels,
        SplitTag::Train,
        &args.data,
    )?;
    let (data, policy, input_dim) = training_set(&dataset, resolved.max_rotation)?;

    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(&hidden);
    dims.push(dim);

    let mut entries = TrainFlags::hash_entries(&resolved);
    entries.push(("members", members.to_string()));
    entries.push(("dim", dim.to_string()));
    entries.push(("hidden", format!("{hidden:?}")));
    entries.push(("activation", format!("{activation:?}")));
    entries.push(("seed", args.seed.to_string()));
    entries.push(("data-seed", args.data.data_seed.to_string()));
    let hash = config_hash("train-encoder", &entries);

    let trained = run_jobs(members, args.jobs, |m| {
        let member_seed = args.seed + m as u64;
        let id = format!("m{member_seed}");
        let init = MlpEncoder::new(&id, &dims, activation, member_seed)?;
        let mut cfg = resolved.train.clone();
        cfg.seed = member_seed;
        train_encoder(init, &data, &policy, &resolved.nce, &cfg)
    })?;

    for (encoder, report) in &trained {
        let path = out.join(format!("{}.esem", encoder.id()));
        write_encoder(
            &path,
            encoder,
            &ArtifactMeta::new(encoder.id(), args.seed, &hash, "train-encoder"),
        )?;
        let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
        println!(
            "trained {} ({} epochs, final loss {last:.4}) -> {}",
            encoder.id(),
            report.epoch_losses.len(),
            path.display()
        );
    }
    Ok(())
}
