use std::path::PathBuf;

use clap::Args;
use ese_core::ensemble::{ensemble_embed, EnsembleMode, EnsembleSpec};
use ese_core::error::{Error, Result};
use ese_core::io::{read_alignment_map, read_embeddings, write_embeddings, ArtifactMeta};
use ese_core::sphere::KarcherConfig;

use crate::config::{config_hash, pick, resolve_out_dir, FileConfig};

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    /// Member embedding file; repeat for each member (include the anchor).
    #[arg(long = "member", required = true)]
    pub members: Vec<PathBuf>,
    /// aligned or unaligned.
    #[arg(long, default_value = "aligned")]
    pub mode: String,
    /// Anchor encoder id; defaults to the first member's encoder.
    #[arg(long)]
    pub anchor_id: Option<String>,
    /// Alignment map file; repeat for each non-anchor member (aligned mode).
    #[arg(long = "map")]
    pub maps: Vec<PathBuf>,
    #[arg(long)]
    pub karcher_tolerance: Option<f64>,
    #[arg(long)]
    pub karcher_max_iterations: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: EnsembleArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mode: EnsembleMode = args.mode.parse()?;
    let karcher_defaults = KarcherConfig::default();
    let karcher = KarcherConfig {
        tolerance: pick(
            args.karcher_tolerance,
            file.get("karcher-tolerance"),
            karcher_defaults.tolerance,
        )?,
        max_iterations: pick(
            args.karcher_max_iterations,
            file.get("karcher-max-iterations"),
            karcher_defaults.max_iterations,
        )?,
    };
    let out = resolve_out_dir(args.out)?;

    let sets = args
        .members
        .iter()
        .map(|p| read_embeddings(p).map(|(set, _)| set))
        .collect::<Result<Vec<_>>>()?;
    let member_ids: Vec<String> = sets.iter().map(|s| s.encoder_id().to_string()).collect();
    let anchor_id = args
        .anchor_id
        .clone()
        .or_else(|| member_ids.first().cloned())
        .ok_or(Error::EmptyInput {
            what: "ensemble members",
        })?;

    let maps = match mode {
        EnsembleMode::Unaligned => {
            if !args.maps.is_empty() {
                return Err(Error::InvalidConfig(
                    "--map is only meaningful with --mode aligned".into(),
                ));
            }
            None
        }
        EnsembleMode::Aligned => Some(
            args.maps
                .iter()
                .map(|p| read_alignment_map(p).map(|(map, _)| map))
                .collect::<Result<Vec<_>>>()?,
        ),
    };

    let spec = EnsembleSpec {
        member_ids,
        anchor_id,
        mode,
        karcher,
    };
    let hash = config_hash(
        "ensemble",
        &[
            ("mode", mode.as_str().to_string()),
            ("karcher-tolerance", spec.karcher.tolerance.to_string()),
            (
                "karcher-max-iterations",
                spec.karcher.max_iterations.to_string(),
            ),
            ("seed", args.seed.to_string()),
        ],
    );

    let combined = ensemble_embed(&sets, maps.as_deref(), &spec)?;
    let path = out.join(format!(
        "{}-{}.ese1",
        combined.encoder_id(),
        combined.domain().as_str()
    ));
    write_embeddings(
        &path,
        &combined,
        &ArtifactMeta::new(combined.encoder_id(), args.seed, &hash, "ensemble"),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
