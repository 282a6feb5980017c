use std::path::PathBuf;

use clap::Args;
use ese_core::align::{train_alignment, AlignTrainConfig};
use ese_core::error::{Error, Result};
use ese_core::io::{read_embeddings, write_alignment_map, ArtifactMeta};

use crate::config::{config_hash, parse_list, pick, resolve_out_dir, FileConfig};
use crate::commands::run_jobs;

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Anchor embedding file the members are mapped into.
    #[arg(long)]
    pub anchor: PathBuf,
    /// Member embedding file; repeat for several members.
    #[arg(long = "member", required = true)]
    pub members: Vec<PathBuf>,
    /// Orthogonality penalty grid, comma separated. More than one value
    /// triggers holdout selection.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Threads for concurrent member alignments.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: AlignArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let defaults = AlignTrainConfig::default();
    let lambda_grid = match args.lambda_grid.clone() {
        Some(raw) => parse_list(&raw, "lambda grid")?,
        None => file
            .get_list::<f64>("lambda-grid")?
            .unwrap_or(defaults.lambda_grid.clone()),
    };
    let cfg = AlignTrainConfig {
        epochs: pick(args.epochs, file.get("epochs"), defaults.epochs)?,
        learning_rate: pick(
            args.learning_rate,
            file.get("learning-rate"),
            defaults.learning_rate,
        )?,
        lambda_grid,
        batch_size: pick(args.batch_size, file.get("batch-size"), defaults.batch_size)?,
        seed: args.seed,
    };
    let out = resolve_out_dir(args.out)?;
    let hash = config_hash(
        "align",
        &[
            ("epochs", cfg.epochs.to_string()),
            ("learning-rate", cfg.learning_rate.to_string()),
            ("lambda-grid", format!("{:?}", cfg.lambda_grid)),
            ("batch-size", cfg.batch_size.to_string()),
            ("seed", args.seed.to_string()),
        ],
    );

    let (anchor, _) = read_embeddings(&args.anchor)?;
    let members = args
        .members
        .iter()
        .map(|p| read_embeddings(p).map(|(set, _)| set))
        .collect::<Result<Vec<_>>>()?;
    for member in &members {
        if member.encoder_id() == anchor.encoder_id() {
            return Err(Error::InvalidConfig(format!(
                "member '{}' is the anchor; align only non-anchor members",
                member.encoder_id()
            )));
        }
    }

    let maps = run_jobs(members.len(), args.jobs, |i| {
        train_alignment(&anchor, &members[i], &cfg)
    })?;
    for map in &maps {
        let path = out.join(format!("align-{}.esea", map.source_id));
        write_alignment_map(
            &path,
            map,
            &ArtifactMeta::new(format!("align-{}", map.source_id), args.seed, &hash, "align"),
        )?;
        println!(
            "aligned {} -> {}: lambda {} loss {:.6} residual {:.3e} -> {}",
            map.source_id,
            map.anchor_id,
            map.lambda,
            map.final_align_loss,
            map.orthogonality_residual,
            path.display()
        );
    }
    Ok(())
}
