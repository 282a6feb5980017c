use std::path::PathBuf;

use clap::Args;
use ese_core::data::SplitTag;
use ese_core::ensemble::{weight_space_ensemble, wse_star_protocol, WSE_STAR_LR_OFFSETS};
use ese_core::error::{Error, Result};
use ese_core::io::{read_encoder, write_encoder, ArtifactMeta};

use crate::config::{config_hash, parse_list, resolve_out_dir, FileConfig};
use crate::commands::{load_digits, training_set, DataFlags, TrainFlags};

#[derive(Args, Debug)]
pub struct WseArgs {
    /// naive averages independently trained encoders; star retrains a
    /// shared init over a mild learning-rate grid, then averages.
    #[arg(long, default_value = "naive")]
    pub mode: String,
    /// Trained encoder file (naive mode); repeat for each member.
    #[arg(long = "encoder")]
    pub encoders: Vec<PathBuf>,
    /// Shared initialization encoder (star mode).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// IDX image file for star-mode retraining.
    #[arg(long)]
    pub train_images: Option<PathBuf>,
    /// IDX label file for star-mode retraining.
    #[arg(long)]
    pub train_labels: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Learning-rate offsets for the star grid, comma separated.
    #[arg(long)]
    pub lr_offsets: Option<String>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: WseArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let out = resolve_out_dir(args.out.clone())?;
    match args.mode.as_str() {
        "naive" => run_naive(&args, &out),
        "star" => run_star(&args, &file, &out),
        other => Err(Error::InvalidConfig(format!(
            "unknown wse mode '{other}', expected 'naive' or 'star'"
        ))),
    }
}

fn run_naive(args: &WseArgs, out: &std::path::Path) -> Result<()> {
    if args.encoders.len() < 2 {
        return Err(Error::InvalidConfig(
            "naive wse needs at least two --encoder files".into(),
        ));
    }
    let members = args
        .encoders
        .iter()
        .map(|p| read_encoder(p).map(|(enc, _)| enc))
        .collect::<Result<Vec<_>>>()?;
    let averaged = weight_space_ensemble(&members)?;
    let hash = config_hash(
        "wse",
        &[
            ("mode", "naive".to_string()),
            ("members", members.len().to_string()),
            ("seed", args.seed.to_string()),
        ],
    );
    let path = out.join("wse.esem");
    write_encoder(
        &path,
        &averaged,
        &ArtifactMeta::new(averaged.id(), args.seed, &hash, "wse"),
    )?;
    println!("wrote {} ({})", path.display(), averaged.id());
    Ok(())
}

fn run_star(args: &WseArgs, file: &FileConfig, out: &std::path::Path) -> Result<()> {
    let init_path = args.init.as_ref().ok_or_else(|| {
        Error::InvalidConfig("star wse needs --init with the shared initialization".into())
    })?;
    let (images, labels) = match (&args.train_images, &args.train_labels) {
        (Some(i), Some(l)) => (i, l),
        _ => {
            return Err(Error::InvalidConfig(
                "star wse retrains and needs --train-images and --train-labels".into(),
            ))
        }
    };
    let lr_offsets = match args.lr_offsets.clone() {
        Some(raw) => parse_list(&raw, "lr offsets")?,
        None => file
            .get_list::<f64>("lr-offsets")?
            .unwrap_or(WSE_STAR_LR_OFFSETS.to_vec()),
    };
    let resolved = args.train.resolve(file, args.seed)?;

    let (init, _) = read_encoder(init_path)?;
    let dataset = load_digits(images, labels, SplitTag::Train, &args.data)?;
    let (data, policy, input_dim) = training_set(&dataset, resolved.max_rotation)?;
    if input_dim != init.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: init.input_dim(),
            got: input_dim,
        });
    }

    let members = wse_star_protocol(&init, &data, &policy, &resolved.nce, &resolved.train, &lr_offsets)?;
    let averaged = weight_space_ensemble(&members)?;
    let mut entries = TrainFlags::hash_entries(&resolved);
    entries.push(("mode", "star".to_string()));
    entries.push(("lr-offsets", format!("{lr_offsets:?}")));
    entries.push(("seed", args.seed.to_string()));
    entries.push(("data-seed", args.data.data_seed.to_string()));
    let hash = config_hash("wse", &entries);

    let path = out.join("wse-star.esem");
    write_encoder(
        &path,
        &averaged,
        &ArtifactMeta::new(averaged.id(), args.seed, &hash, "wse"),
    )?;
    println!("wrote {} ({})", path.display(), averaged.id());
    Ok(())
}
