use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use ese_core::embedding::DomainTag;
use ese_core::error::{Error, Result};
use ese_core::io::{read_embeddings, write_meta, ArtifactMeta};
use ese_core::metrics::evaluate;

use crate::config::{config_hash, resolve_out_dir};

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Single-model embedding file; repeat per member and domain.
    #[arg(long = "single", required = true)]
    pub singles: Vec<PathBuf>,
    /// Unaligned-ensemble embedding file; repeat per domain.
    #[arg(long = "unaligned")]
    pub unaligned: Vec<PathBuf>,
    /// Aligned-ensemble embedding file; repeat per domain.
    #[arg(long = "aligned")]
    pub aligned: Vec<PathBuf>,
    /// Naive weight-space-ensemble embedding file; repeat per domain.
    #[arg(long = "wse")]
    pub wse: Vec<PathBuf>,
    /// Carefully built weight-space-ensemble file; repeat per domain.
    #[arg(long = "wse-star")]
    pub wse_star: Vec<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
struct Scores {
    r1: f64,
    mapr: f64,
}

impl Scores {
    fn get(&self, metric: usize) -> f64 {
        if metric == 0 {
            self.r1
        } else {
            self.mapr
        }
    }
}

const METRIC_NAMES: [&str; 2] = ["Recall@1", "MAP@R"];
const DOMAIN_ORDER: [DomainTag; 4] = [
    DomainTag::Id,
    DomainTag::OodColor,
    DomainTag::OodCrop,
    DomainTag::Synthetic,
];

fn display_domain(d: DomainTag) -> &'static str {
    match d {
        DomainTag::Id => "ID",
        DomainTag::OodColor => "OOD(Color)",
        DomainTag::OodCrop => "OOD(Crop)",
        DomainTag::Synthetic => "Synthetic",
    }
}

/// Evaluates one embedding file, folding its dimension into the shared
/// dimension check: mixing artifacts of different embedding dimension in one
/// table is refused.
fn score(path: &PathBuf, dim: &mut Option<(usize, PathBuf)>) -> Result<(DomainTag, Scores)> {
    let (set, _) = read_embeddings(path)?;
    match dim {
        None => *dim = Some((set.dim(), path.clone())),
        Some((d, first)) if *d != set.dim() => {
            return Err(Error::InvalidConfig(format!(
                "mismatched embedding dimensions: {} is {}-dimensional but {} is {}-dimensional",
                first.display(),
                d,
                path.display(),
                set.dim()
            )));
        }
        Some(_) => {}
    }
    let report = evaluate(&set)?;
    Ok((
        report.domain,
        Scores {
            r1: report.r_at_1,
            mapr: report.map_at_r,
        },
    ))
}

fn percent_delta(ensemble: f64, single_mean: f64) -> f64 {
    100.0 * (ensemble - single_mean) / single_mean
}

pub fn run(args: ReportArgs) -> Result<()> {
    let out = resolve_out_dir(args.out.clone())?;
    let mut dim: Option<(usize, PathBuf)> = None;

    let mut singles: BTreeMap<u8, Vec<Scores>> = BTreeMap::new();
    for path in &args.singles {
        let (domain, scores) = score(path, &mut dim)?;
        singles.entry(domain.code()).or_default().push(scores);
    }

    let column_inputs: [(&str, &Vec<PathBuf>); 4] = [
        ("unaligned", &args.unaligned),
        ("aligned", &args.aligned),
        ("wse", &args.wse),
        ("wse_star", &args.wse_star),
    ];
    let mut columns: Vec<BTreeMap<u8, Scores>> = vec![BTreeMap::new(); 4];
    for (c, (name, paths)) in column_inputs.iter().enumerate() {
        for path in *paths {
            let (domain, scores) = score(path, &mut dim)?;
            if columns[c].insert(domain.code(), scores).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "two --{} files share the domain '{}'",
                    name.replace('_', "-"),
                    domain.as_str()
                )));
            }
            if !singles.contains_key(&domain.code()) {
                return Err(Error::InvalidConfig(format!(
                    "--{} covers domain '{}' but no --single does; the percent deltas need the single-model baseline",
                    name.replace('_', "-"),
                    domain.as_str()
                )));
            }
        }
    }

    let mut csv = String::from(
        "metric,domain,single_mean,single_std,unaligned,unaligned_pct,aligned,aligned_pct,wse,wse_pct,wse_star,wse_star_pct\n",
    );
    let mut md = String::from(
        "| Metric | Domain | Single (mean ± std) | Unaligned | %Δ | Aligned | %Δ | WSE | %Δ | WSE* | %Δ |\n\
         |---|---|---|---|---|---|---|---|---|---|---|\n",
    );

    for metric in 0..2 {
        for domain in DOMAIN_ORDER {
            let Some(members) = singles.get(&domain.code()) else {
                continue;
            };
            let values: Vec<f64> = members.iter().map(|s| s.get(metric)).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (values.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };

            csv.push_str(&format!(
                "{},{},{mean:.6},{std:.6}",
                METRIC_NAMES[metric],
                domain.as_str()
            ));
            md.push_str(&format!(
                "| {} | {} | {mean:.4} ± {std:.4} ",
                METRIC_NAMES[metric],
                display_domain(domain)
            ));
            for column in &columns {
                match column.get(&domain.code()) {
                    Some(scores) => {
                        let value = scores.get(metric);
                        let pct = percent_delta(value, mean);
                        csv.push_str(&format!(",{value:.6},{pct:.6}"));
                        md.push_str(&format!("| {value:.4} | {pct:+.2}% "));
                    }
                    None => {
                        csv.push_str(",,");
                        md.push_str("| - | - ");
                    }
                }
            }
            csv.push('\n');
            md.push_str("|\n");
        }
    }

    print!("{md}");
    let hash = config_hash("report", &[("seed", args.seed.to_string())]);
    for (name, body) in [("report.csv", &csv), ("report.md", &md)] {
        let path = out.join(name);
        std::fs::write(&path, body)?;
        write_meta(&path, &ArtifactMeta::new("report", args.seed, &hash, "report"))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
