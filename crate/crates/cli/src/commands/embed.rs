use std::path::PathBuf;

use clap::Args;
use ese_core::contrastive::embed;
use ese_core::data::augment::{random_colorize, random_crop_resize};
use ese_core::data::{Image, SplitTag};
use ese_core::embedding::DomainTag;
use ese_core::error::{Error, Result};
use ese_core::io::{read_encoder, write_embeddings, ArtifactMeta};
use ese_core::seeding::derive_seed;
use nalgebra::DMatrix;

use crate::config::{config_hash, resolve_out_dir};
use crate::commands::{load_digits, DataFlags};

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Encoder file; repeat to embed with several encoders in one pass.
    #[arg(long = "encoder", required = true)]
    pub encoders: Vec<PathBuf>,
    /// IDX image file (raw or gzipped).
    #[arg(long)]
    pub images: PathBuf,
    /// IDX label file.
    #[arg(long)]
    pub labels: PathBuf,
    /// id, ood-color, or ood-crop.
    #[arg(long, default_value = "id")]
    pub domain: String,
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// OOD transforms are keyed by (seed, domain, image index) only, so every
/// encoder — and every later run with the same seed — sees identical inputs.
fn transform(img: &Image, domain: DomainTag, seed: u64, index: u64) -> Result<Image> {
    match domain {
        DomainTag::Id => Ok(img.clone()),
        DomainTag::OodColor => random_colorize(img, derive_seed(seed, "ood-color", index)),
        DomainTag::OodCrop => random_crop_resize(img, derive_seed(seed, "ood-crop", index)),
        DomainTag::Synthetic => Err(Error::InvalidConfig(
            "embed produces image domains; 'synthetic' is reserved for synth output".into(),
        )),
    }
}

pub fn run(args: EmbedArgs) -> Result<()> {
    let domain: DomainTag = args.domain.parse()?;
    let out = resolve_out_dir(args.out)?;
    let dataset = load_digits(&args.images, &args.labels, SplitTag::Test, &args.data)?;

    let transformed = dataset
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| transform(img, domain, args.seed, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let shape = transformed[0].shape();
    let mut inputs = DMatrix::zeros(shape.len(), transformed.len());
    for (i, img) in transformed.iter().enumerate() {
        inputs.column_mut(i).copy_from_slice(img.pixels());
    }
    let labels = dataset.labels_i32();

    let hash = config_hash(
        "embed",
        &[
            ("domain", domain.as_str().to_string()),
            ("seed", args.seed.to_string()),
            ("data-seed", args.data.data_seed.to_string()),
            (
                "limit",
                args.data
                    .limit
                    .map_or_else(|| "all".to_string(), |l| l.to_string()),
            ),
        ],
    );

    for encoder_path in &args.encoders {
        let (encoder, _) = read_encoder(encoder_path)?;
        let set = embed(&encoder, &inputs, Some(labels.clone()), domain)?;
        let path = out.join(format!("{}-{}.ese1", encoder.id(), domain.as_str()));
        write_embeddings(
            &path,
            &set,
            &ArtifactMeta::new(encoder.id(), args.seed, &hash, "embed"),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
