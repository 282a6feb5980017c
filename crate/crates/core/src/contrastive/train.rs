//! Contrastive training loop: positive-pair policies, optimizers, and the
//! epoch/batch schedule. All randomness is keyed by (seed, purpose, index),
//! so training is bit-reproducible and independent of thread schedule.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::encoder::{EncoderGradients, MlpEncoder};
use crate::contrastive::loss::{infonce_batch, InfoNceConfig};
use crate::data::{augment, Image, ImageShape};
use crate::embedding::{DomainTag, EmbeddingSet};
use crate::error::{Error, Result};
use crate::parallel::try_map_indexed;
use crate::seeding::rng_for;
use crate::synthetic::{perturb_on_sphere, AffineObservation};
use crate::sphere::UnitVector;

/// Inputs for encoder training: one sample per column, plus whatever side
/// information the positive-pair policies need.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    inputs: DMatrix<f64>,
    labels: Option<Vec<i32>>,
    /// Present when the inputs are flattened images (rotation policy).
    image_shape: Option<ImageShape>,
    /// Ground-truth latents, one column per sample (synthetic vMF policy).
    latents: Option<DMatrix<f64>>,
    /// Observation map from latents to inputs (synthetic vMF policy).
    observation: Option<AffineObservation>,
}

impl TrainingSet {
    pub fn new(inputs: DMatrix<f64>) -> Result<Self> {
        if inputs.ncols() == 0 {
            return Err(Error::EmptyInput {
                what: "training inputs",
            });
        }
        Ok(Self {
            inputs,
            labels: None,
            image_shape: None,
            latents: None,
            observation: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != self.inputs.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs.ncols(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_image_shape(mut self, shape: ImageShape) -> Result<Self> {
        if shape.len() != self.inputs.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs.nrows(),
                got: shape.len(),
            });
        }
        self.image_shape = Some(shape);
        Ok(self)
    }

    pub fn with_latents(
        mut self,
        latents: DMatrix<f64>,
        observation: AffineObservation,
    ) -> Result<Self> {
        if latents.ncols() != self.inputs.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs.ncols(),
                got: latents.ncols(),
            });
        }
        if observation.latent_dim() != latents.nrows()
            || observation.observation_dim() != self.inputs.nrows()
        {
            return Err(Error::DimensionMismatch {
                expected: self.inputs.nrows(),
                got: observation.observation_dim(),
            });
        }
        self.latents = Some(latents);
        self.observation = Some(observation);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.ncols() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }
}

/// How positive views are generated for an anchor sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum PositivePairPolicy {
    /// Two independently rotated views of the same image.
    Rotation { max_degrees: f64 },
    /// A different sample of the same class.
    Label,
    /// The observation of a perturbed latent (concentration `kappa`).
    SyntheticVmf { kappa: f64 },
}

impl PositivePairPolicy {
    fn validate(&self, data: &TrainingSet) -> Result<()> {
        match self {
            PositivePairPolicy::Rotation { max_degrees } => {
                if !(*max_degrees > 0.0 && *max_degrees <= 180.0) {
                    return Err(Error::InvalidConfig(format!(
                        "rotation policy needs max_degrees in (0, 180], got {max_degrees}"
                    )));
                }
                if data.image_shape.is_none() {
                    return Err(Error::InvalidConfig(
                        "rotation policy needs a training set with an image shape".into(),
                    ));
                }
                Ok(())
            }
            PositivePairPolicy::Label => {
                if data.labels.is_none() {
                    return Err(Error::MissingLabels);
                }
                Ok(())
            }
            PositivePairPolicy::SyntheticVmf { kappa } => {
                if !kappa.is_finite() || *kappa < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "vMF policy needs a finite non-negative kappa, got {kappa}"
                    )));
                }
                if data.latents.is_none() || data.observation.is_none() {
                    return Err(Error::InvalidConfig(
                        "vMF policy needs a training set with latents and an observation map"
                            .into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidConfig(format!(
                "unknown optimizer '{other}' (expected sgd or adam)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Zero epochs returns the initialized encoder unchanged.
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 256,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "batch size must be at least 2 (negatives come from the batch)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean InfoNCE loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// A realized contrastive batch: two views per sample plus negative
/// assignments indexing the anchor columns.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub anchors: DMatrix<f64>,
    pub positives: DMatrix<f64>,
    pub negatives: Vec<Vec<usize>>,
}

impl ContrastiveBatch {
    /// Draws the two views for every sample in `batch_indices` and assigns
    /// `num_negatives` in-batch negatives per anchor (uniform with
    /// replacement, anchor excluded). View draws are keyed by
    /// (seed, epoch, dataset index); negative draws by (seed, batch ordinal).
    pub fn draw(
        data: &TrainingSet,
        policy: &PositivePairPolicy,
        batch_indices: &[usize],
        num_negatives: usize,
        seed: u64,
        epoch: usize,
        batch_ordinal: u64,
    ) -> Result<Self> {
        let b = batch_indices.len();
        if b < 2 {
            return Err(Error::InvalidConfig(
                "contrastive batches need at least 2 samples".into(),
            ));
        }
        let class_map = match policy {
            PositivePairPolicy::Label => Some(class_index_map(
                data.labels.as_deref().ok_or(Error::MissingLabels)?,
            )),
            _ => None,
        };

        let n = data.len() as u64;
        let views = try_map_indexed(b, |slot| {
            let idx = batch_indices[slot];
            let mut rng = rng_for(seed, "views", epoch as u64 * n + idx as u64);
            draw_views(data, policy, idx, class_map.as_ref(), &mut rng)
        })?;

        let in_dim = data.input_dim();
        let mut anchors = DMatrix::zeros(in_dim, b);
        let mut positives = DMatrix::zeros(in_dim, b);
        for (slot, (a, p)) in views.into_iter().enumerate() {
            anchors.column_mut(slot).copy_from(&a);
            positives.column_mut(slot).copy_from(&p);
        }

        let mut neg_rng = rng_for(seed, "negatives", batch_ordinal);
        let negatives = (0..b)
            .map(|slot| {
                (0..num_negatives)
                    .map(|_| {
                        let j = neg_rng.random_range(0..b - 1);
                        if j >= slot {
                            j + 1
                        } else {
                            j
                        }
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            anchors,
            positives,
            negatives,
        })
    }
}

fn class_index_map(labels: &[i32]) -> HashMap<i32, Vec<usize>> {
    let mut map: HashMap<i32, Vec<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        map.entry(l).or_default().push(i);
    }
    map
}

fn draw_views<R: Rng>(
    data: &TrainingSet,
    policy: &PositivePairPolicy,
    idx: usize,
    class_map: Option<&HashMap<i32, Vec<usize>>>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    match policy {
        PositivePairPolicy::Rotation { max_degrees } => {
            let shape = data.image_shape.expect("validated");
            let image = Image::from_column(shape, &data.inputs.column(idx).clone_owned())?;
            let angle_a = rng.random_range(-max_degrees..=*max_degrees);
            let angle_p = rng.random_range(-max_degrees..=*max_degrees);
            let view_a = augment::rotate(&image, angle_a)?;
            let view_p = augment::rotate(&image, angle_p)?;
            Ok((view_a.to_column(), view_p.to_column()))
        }
        PositivePairPolicy::Label => {
            let labels = data.labels.as_deref().expect("validated");
            let mates = &class_map.expect("validated")[&labels[idx]];
            // Same-class partner, excluding the anchor when possible.
            let partner = if mates.len() == 1 {
                mates[0]
            } else {
                loop {
                    let m = mates[rng.random_range(0..mates.len())];
                    if m != idx {
                        break m;
                    }
                }
            };
            Ok((
                data.inputs.column(idx).clone_owned(),
                data.inputs.column(partner).clone_owned(),
            ))
        }
        PositivePairPolicy::SyntheticVmf { kappa } => {
            let latents = data.latents.as_ref().expect("validated");
            let observation = data.observation.as_ref().expect("validated");
            let z = UnitVector::normalized(latents.column(idx).clone_owned())?;
            let z_pos = perturb_on_sphere(&z, *kappa, rng)?;
            Ok((
                data.inputs.column(idx).clone_owned(),
                observation.apply(z_pos.as_vector())?,
            ))
        }
    }
}

/// Loss and exact parameter gradients for one realized batch: forward both
/// views, differentiate the mean InfoNCE loss through the normalization
/// layer, and backpropagate each view's embedding gradient.
pub fn infonce_gradient(
    encoder: &MlpEncoder,
    batch: &ContrastiveBatch,
    cfg: &InfoNceConfig,
) -> Result<(f64, EncoderGradients)> {
    let trace_a = encoder.forward_batch(&batch.anchors)?;
    let trace_p = encoder.forward_batch(&batch.positives)?;
    let (loss, grad_a, grad_p) =
        infonce_batch(&trace_a.units, &trace_p.units, &batch.negatives, cfg)?;
    let mut grads = encoder.backward_batch(&trace_a, &grad_a);
    grads.add_assign(&encoder.backward_batch(&trace_p, &grad_p));
    Ok((loss, grads))
}

enum Optimizer {
    Sgd,
    Adam {
        m: EncoderGradients,
        v: EncoderGradients,
        t: usize,
    },
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    fn new(kind: OptimizerKind, encoder: &MlpEncoder) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: EncoderGradients::zeros_like(encoder),
                v: EncoderGradients::zeros_like(encoder),
                t: 0,
            },
        }
    }

    fn step(&mut self, encoder: &mut MlpEncoder, grads: &EncoderGradients, lr: f64) {
        match self {
            Optimizer::Sgd => {
                let (weights, biases) = encoder.params_mut();
                for (w, g) in weights.iter_mut().zip(&grads.weights) {
                    w.zip_apply(g, |wi, gi| *wi -= lr * gi);
                }
                for (b, g) in biases.iter_mut().zip(&grads.biases) {
                    b.zip_apply(g, |bi, gi| *bi -= lr * gi);
                }
            }
            Optimizer::Adam { m, v, t } => {
                *t += 1;
                let correction1 = 1.0 - ADAM_BETA1.powi(*t as i32);
                let correction2 = 1.0 - ADAM_BETA2.powi(*t as i32);
                let (weights, biases) = encoder.params_mut();
                for l in 0..weights.len() {
                    adam_update(
                        weights[l].as_mut_slice(),
                        m.weights[l].as_mut_slice(),
                        v.weights[l].as_mut_slice(),
                        grads.weights[l].as_slice(),
                        lr,
                        correction1,
                        correction2,
                    );
                    adam_update(
                        biases[l].as_mut_slice(),
                        m.biases[l].as_mut_slice(),
                        v.biases[l].as_mut_slice(),
                        grads.biases[l].as_slice(),
                        lr,
                        correction1,
                        correction2,
                    );
                }
            }
        }
    }
}

fn adam_update(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    grads: &[f64],
    lr: f64,
    correction1: f64,
    correction2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m[i] / correction1;
        let v_hat = v[i] / correction2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Trains `init` in place of a fresh encoder, consuming it so zero-epoch runs
/// hand the initialization back unchanged. Batches iterate a seeded shuffle;
/// the last batch is dropped only when it holds a single sample (no possible
/// in-batch negative).
pub fn train_encoder(
    init: MlpEncoder,
    data: &TrainingSet,
    policy: &PositivePairPolicy,
    nce: &InfoNceConfig,
    cfg: &TrainConfig,
) -> Result<(MlpEncoder, TrainReport)> {
    cfg.validate()?;
    nce.validate()?;
    policy.validate(data)?;
    if data.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "training needs at least 2 samples, got {}",
            data.len()
        )));
    }
    if data.input_dim() != init.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: init.input_dim(),
            got: data.input_dim(),
        });
    }

    let mut encoder = init;
    let mut optimizer = Optimizer::new(cfg.optimizer, &encoder);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let n = data.len();
    let mut batch_ordinal: u64 = 0;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(cfg.seed, "shuffle", epoch as u64));

        let mut loss_weighted = 0.0;
        let mut samples_seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch = ContrastiveBatch::draw(
                data,
                policy,
                chunk,
                nce.num_negatives,
                cfg.seed,
                epoch,
                batch_ordinal,
            )?;
            batch_ordinal += 1;
            let (loss, grads) =
                infonce_gradient(&encoder, &batch, nce).map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!(
                        "epoch {epoch}, batch {batch_ordinal}: {msg} (aborting training)"
                    )),
                    other => other,
                })?;
            optimizer.step(&mut encoder, &grads, cfg.learning_rate);
            loss_weighted += loss * chunk.len() as f64;
            samples_seen += chunk.len();
        }
        epoch_losses.push(loss_weighted / samples_seen as f64);
    }

    Ok((encoder, TrainReport { epoch_losses }))
}

/// Embeds every input column, preserving order and attaching the encoder id.
pub fn embed(
    encoder: &MlpEncoder,
    inputs: &DMatrix<f64>,
    labels: Option<Vec<i32>>,
    domain: DomainTag,
) -> Result<EmbeddingSet> {
    if inputs.nrows() != encoder.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: encoder.input_dim(),
            got: inputs.nrows(),
        });
    }
    let n = inputs.ncols();
    if n == 0 {
        return Err(Error::EmptyInput {
            what: "embed inputs",
        });
    }
    let dim = encoder.output_dim();
    let mut rows = DMatrix::zeros(n, dim);
    let chunk_size = 1024;
    let mut start = 0;
    while start < n {
        let count = chunk_size.min(n - start);
        let trace = encoder.forward_batch(&inputs.columns(start, count).clone_owned())?;
        for local in 0..count {
            rows.row_mut(start + local)
                .copy_from(&trace.units.column(local).transpose());
        }
        start += count;
    }
    EmbeddingSet::new(encoder.id(), domain, rows, labels)
}
