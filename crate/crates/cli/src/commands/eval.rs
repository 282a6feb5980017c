use std::path::PathBuf;

use clap::Args;
use ese_core::error::Result;
use ese_core::io::{read_embeddings, write_meta, ArtifactMeta};
use ese_core::metrics::evaluate;

use crate::config::{config_hash, maybe_out_dir};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Labeled embedding file; repeat for one CSV row each.
    #[arg(long = "embeddings", required = true)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Also write eval.csv here (or to ESE_OUT_DIR); stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const EVAL_HEADER: &str = "encoder_id,domain,n_queries,dim,r_at_1,map_at_r";

pub fn run(args: EvalArgs) -> Result<()> {
    let mut csv = String::from(EVAL_HEADER);
    csv.push('\n');
    for path in &args.embeddings {
        let (set, _) = read_embeddings(path)?;
        let report = evaluate(&set)?;
        csv.push_str(&format!(
            "{},{},{},{},{:.6},{:.6}\n",
            set.encoder_id(),
            report.domain.as_str(),
            report.n_queries,
            set.dim(),
            report.r_at_1,
            report.map_at_r,
        ));
    }
    print!("{csv}");

    if let Some(dir) = maybe_out_dir(args.out.clone()) {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("eval.csv");
        std::fs::write(&path, &csv)?;
        let hash = config_hash("eval", &[("seed", args.seed.to_string())]);
        write_meta(&path, &ArtifactMeta::new("eval", args.seed, &hash, "eval"))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
