//! Embedding-space ensembles (Karcher mean of aligned or raw member
//! embeddings) and the weight-space baselines they are compared against.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::align::AlignmentMap;
use crate::contrastive::{
    train_encoder, InfoNceConfig, MlpEncoder, PositivePairPolicy, TrainConfig, TrainingSet,
};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::parallel::try_map_indexed;
use crate::sphere::{karcher_mean, KarcherConfig, UnitVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    Aligned,
    Unaligned,
}

impl EnsembleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleMode::Aligned => "aligned",
            EnsembleMode::Unaligned => "unaligned",
        }
    }
}

impl std::str::FromStr for EnsembleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(EnsembleMode::Aligned),
            "unaligned" => Ok(EnsembleMode::Unaligned),
            other => Err(Error::InvalidConfig(format!(
                "unknown ensemble mode '{other}' (expected aligned or unaligned)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub member_ids: Vec<String>,
    pub anchor_id: String,
    pub mode: EnsembleMode,
    pub karcher: KarcherConfig,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.member_ids.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "ensembles need at least 2 members, got {}",
                self.member_ids.len()
            )));
        }
        if self.mode == EnsembleMode::Aligned
            && !self.member_ids.iter().any(|id| *id == self.anchor_id)
        {
            return Err(Error::InvalidConfig(format!(
                "anchor '{}' is not among the ensemble members",
                self.anchor_id
            )));
        }
        self.karcher.validate()
    }
}

/// Per-sample Karcher mean across members. In aligned mode each non-anchor
/// member's rows pass through its map and are re-normalized first; in
/// unaligned mode the raw member rows are averaged as-is.
pub fn ensemble_embed(
    sets: &[EmbeddingSet],
    maps: Option<&[AlignmentMap]>,
    spec: &EnsembleSpec,
) -> Result<EmbeddingSet> {
    spec.validate()?;
    if sets.len() != spec.member_ids.len() {
        return Err(Error::InvalidConfig(format!(
            "spec names {} members but {} embedding sets were given",
            spec.member_ids.len(),
            sets.len()
        )));
    }
    for (set, id) in sets.iter().zip(&spec.member_ids) {
        if set.encoder_id() != id {
            return Err(Error::InvalidConfig(format!(
                "member order mismatch: expected '{id}', got '{}'",
                set.encoder_id()
            )));
        }
    }
    let n = sets[0].len();
    let dim = sets[0].dim();
    let domain = sets[0].domain();
    for set in &sets[1..] {
        if set.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: set.len(),
            });
        }
        if set.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: set.dim(),
            });
        }
        if set.domain() != domain {
            return Err(Error::InvalidConfig(format!(
                "members span different domains: {} vs {}",
                domain.as_str(),
                set.domain().as_str()
            )));
        }
    }

    // Member matrices in the anchor's frame (aligned) or raw (unaligned).
    let mut frames: Vec<DMatrix<f64>> = Vec::with_capacity(sets.len());
    let mut label_source = 0;
    match spec.mode {
        EnsembleMode::Unaligned => {
            for set in sets {
                frames.push(set.matrix().clone());
            }
        }
        EnsembleMode::Aligned => {
            let maps = maps.ok_or_else(|| {
                Error::InvalidConfig("aligned mode requires alignment maps".into())
            })?;
            if maps.len() != sets.len() - 1 {
                return Err(Error::InvalidConfig(format!(
                    "expected {} alignment maps, got {}",
                    sets.len() - 1,
                    maps.len()
                )));
            }
            for (i, set) in sets.iter().enumerate() {
                if set.encoder_id() == spec.anchor_id {
                    label_source = i;
                    frames.push(set.matrix().clone());
                    continue;
                }
                let map = maps
                    .iter()
                    .find(|m| m.source_id == set.encoder_id())
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "no alignment map for member '{}'",
                            set.encoder_id()
                        ))
                    })?;
                if map.anchor_id != spec.anchor_id {
                    return Err(Error::InvalidConfig(format!(
                        "map for '{}' targets anchor '{}', expected '{}'",
                        map.source_id, map.anchor_id, spec.anchor_id
                    )));
                }
                if map.matrix.nrows() != dim || map.matrix.ncols() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: map.matrix.nrows(),
                    });
                }
                // Row n becomes (R v_n)^T, re-normalized.
                let mut rows = set.matrix() * map.matrix.transpose();
                for r in 0..n {
                    let norm = rows.row(r).norm();
                    if norm == 0.0 || !norm.is_finite() {
                        return Err(Error::ZeroVector {
                            context: "aligned member embedding",
                        }
                        .at_row(r));
                    }
                    rows.row_mut(r).scale_mut(1.0 / norm);
                }
                frames.push(rows);
            }
        }
    }

    let mean_rows = try_map_indexed(n, |row| -> Result<Vec<f64>> {
        // Frame rows are unit already (member sets at construction, mapped
        // rows just above); skipping re-normalization keeps identical
        // members bit-identical through the Karcher short-circuit.
        let points: Vec<UnitVector> = frames
            .iter()
            .map(|f| UnitVector::from_unit_unchecked(f.row(row).transpose()))
            .collect();
        let mean = karcher_mean(&points, &spec.karcher).map_err(|e| e.at_row(row))?;
        Ok(mean.mean.as_vector().iter().copied().collect())
    })?;

    let mut matrix = DMatrix::zeros(n, dim);
    for (r, row) in mean_rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            matrix[(r, c)] = v;
        }
    }
    EmbeddingSet::new(
        format!("ensemble-{}", spec.mode.as_str()),
        domain,
        matrix,
        sets[label_source].labels().map(<[i32]>::to_vec),
    )
}

/// Uniform elementwise mean of the members' weights and biases.
pub fn weight_space_ensemble(encoders: &[MlpEncoder]) -> Result<MlpEncoder> {
    let first = encoders.first().ok_or(Error::EmptyInput {
        what: "weight-space ensemble members",
    })?;
    for enc in &encoders[1..] {
        if enc.layer_dims() != first.layer_dims() || enc.activation() != first.activation() {
            return Err(Error::InvalidConfig(format!(
                "encoder '{}' has a different architecture than '{}'",
                enc.id(),
                first.id()
            )));
        }
    }
    let m = encoders.len() as f64;
    let mut weights: Vec<DMatrix<f64>> = first.weights().to_vec();
    let mut biases = first.biases().to_vec();
    for enc in &encoders[1..] {
        for (acc, w) in weights.iter_mut().zip(enc.weights()) {
            *acc += w;
        }
        for (acc, b) in biases.iter_mut().zip(enc.biases()) {
            *acc += b;
        }
    }
    for w in &mut weights {
        w.unscale_mut(m);
    }
    for b in &mut biases {
        b.unscale_mut(m);
    }
    let ids: Vec<&str> = encoders.iter().map(MlpEncoder::id).collect();
    MlpEncoder::from_parts(
        format!("wse[{}]", ids.join("+")),
        first.layer_dims().to_vec(),
        weights,
        biases,
        first.activation(),
    )
}

/// Trains one encoder per learning-rate offset from a single shared
/// initialization; everything else (data order, view draws, negatives)
/// is held identical across members.
pub fn wse_star_protocol(
    init: &MlpEncoder,
    data: &TrainingSet,
    policy: &PositivePairPolicy,
    nce: &InfoNceConfig,
    base: &TrainConfig,
    lr_offsets: &[f64],
) -> Result<Vec<MlpEncoder>> {
    if lr_offsets.is_empty() {
        return Err(Error::EmptyInput {
            what: "learning-rate offsets",
        });
    }
    try_map_indexed(lr_offsets.len(), |m| {
        let cfg = TrainConfig {
            learning_rate: base.learning_rate + lr_offsets[m],
            ..base.clone()
        };
        let member = init.clone().with_id(format!("{}-star{m}", init.id()));
        let (trained, _) = train_encoder(member, data, policy, nce, &cfg)?;
        Ok(trained)
    })
}

/// Default WSE* learning-rate offsets.
pub const WSE_STAR_LR_OFFSETS: [f64; 3] = [1e-5, 3e-5, 5e-5];
