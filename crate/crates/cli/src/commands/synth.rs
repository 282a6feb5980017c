use std::path::PathBuf;

use clap::Args;
use ese_core::error::Result;
use ese_core::io::{write_embeddings, ArtifactMeta};
use ese_core::synthetic::{SyntheticWorld, SyntheticWorldConfig};

use crate::config::{config_hash, pick, resolve_out_dir, FileConfig};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Latent/embedding dimension D.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of shared latent samples N.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Ensemble members M, one orthogonal transform each.
    #[arg(long)]
    pub members: Option<usize>,
    /// Member noise concentration; 0 is exact.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Observation dimension; omitted observes latents directly.
    #[arg(long)]
    pub observation_dim: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: SynthArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let config = SyntheticWorldConfig {
        latent_dim: pick(args.dim, file.get("dim"), 8)?,
        samples: pick(args.samples, file.get("samples"), 1000)?,
        members: pick(args.members, file.get("members"), 5)?,
        noise_kappa: pick(args.kappa, file.get("kappa"), 0.0)?,
        observation_dim: args.observation_dim.or(file.get("observation-dim")?),
        seed: args.seed,
    };
    let out = resolve_out_dir(args.out)?;
    let hash = config_hash(
        "synth",
        &[
            ("dim", config.latent_dim.to_string()),
            ("samples", config.samples.to_string()),
            ("members", config.members.to_string()),
            ("kappa", config.noise_kappa.to_string()),
            (
                "observation-dim",
                config
                    .observation_dim
                    .map_or_else(|| "none".to_string(), |d| d.to_string()),
            ),
            ("seed", args.seed.to_string()),
        ],
    );

    let world = SyntheticWorld::generate(config.clone())?;
    let latents = world.latent_set()?;
    let path = out.join(format!("{}.ese1", latents.encoder_id()));
    write_embeddings(
        &path,
        &latents,
        &ArtifactMeta::new(latents.encoder_id(), args.seed, &hash, "synth"),
    )?;
    println!("wrote {}", path.display());
    for m in 0..config.members {
        let set = world.member_embeddings(m)?;
        let path = out.join(format!("{}.ese1", set.encoder_id()));
        write_embeddings(
            &path,
            &set,
            &ArtifactMeta::new(set.encoder_id(), args.seed, &hash, "synth"),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
