//! Synthetic worlds with known ground truth: shared latents on the unit
//! sphere, per-member orthogonal transforms, optional concentration-style
//! noise, and an affine observation map. Because the true transforms are
//! known, alignment and aggregation can be validated for exact recovery.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::{DomainTag, EmbeddingSet};
use crate::error::{Error, Result};
use crate::parallel::try_map_indexed;
use crate::seeding::rng_for;
use crate::sphere::UnitVector;

/// Observation maps must have condition number below this; candidates are
/// resampled otherwise.
pub const MAX_OBSERVATION_CONDITION: f64 = 100.0;

const MAX_OBSERVATION_ATTEMPTS: usize = 100;

/// `n` points drawn uniformly on S^(d-1) (componentwise Gaussian draws,
/// renormalized), returned as unit rows.
pub fn sample_uniform_sphere(n: usize, d: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    if n == 0 {
        return Err(Error::EmptyInput {
            what: "sphere sample count",
        });
    }
    let mut rng = rng_for(seed, "uniform-sphere", 0);
    let mut matrix = DMatrix::zeros(n, d);
    for r in 0..n {
        loop {
            let row = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = row.norm();
            if norm > 1e-12 {
                matrix.row_mut(r).copy_from(&(row / norm).transpose());
                break;
            }
        }
    }
    Ok(matrix)
}

/// Haar-distributed orthogonal d x d matrix: QR of a Gaussian matrix with the
/// sign of R's diagonal folded into Q's columns.
pub fn random_orthogonal(d: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    let mut rng = rng_for(seed, "haar-orthogonal", 0);
    let gaussian = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gaussian.qr();
    let r_diag: Vec<f64> = (0..d).map(|i| qr.r()[(i, i)]).collect();
    let mut q = qr.q();
    for (j, &r) in r_diag.iter().enumerate() {
        if r < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    Ok(q)
}

/// Perturbs a unit vector with Gaussian noise of scale `1/sqrt(kappa)` and
/// renormalizes; `kappa = 0` returns the input unchanged. Larger `kappa`
/// means tighter concentration around the input.
pub fn perturb_on_sphere<R: Rng>(z: &UnitVector, kappa: f64, rng: &mut R) -> Result<UnitVector> {
    if kappa == 0.0 {
        return Ok(z.clone());
    }
    let scale = 1.0 / kappa.sqrt();
    let noise = DVector::from_fn(z.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    UnitVector::normalized(z.as_vector() + noise * scale)
}

/// Affine observation map from latent space to observation space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum AffineObservation {
    Identity { dim: usize },
    Affine { matrix: DMatrix<f64>, offset: DVector<f64> },
}

impl AffineObservation {
    pub fn latent_dim(&self) -> usize {
        match self {
            AffineObservation::Identity { dim } => *dim,
            AffineObservation::Affine { matrix, .. } => matrix.ncols(),
        }
    }

    pub fn observation_dim(&self) -> usize {
        match self {
            AffineObservation::Identity { dim } => *dim,
            AffineObservation::Affine { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn apply(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: z.len(),
            });
        }
        Ok(match self {
            AffineObservation::Identity { .. } => z.clone(),
            AffineObservation::Affine { matrix, offset } => matrix * z + offset,
        })
    }
}

/// Samples a well-conditioned affine map; candidates whose condition number
/// reaches [`MAX_OBSERVATION_CONDITION`] are rejected and resampled.
fn sample_observation(obs_dim: usize, latent_dim: usize, seed: u64) -> Result<AffineObservation> {
    for attempt in 0..MAX_OBSERVATION_ATTEMPTS {
        let mut rng = rng_for(seed, "observation", attempt as u64);
        let scale = 1.0 / (latent_dim as f64).sqrt();
        let matrix =
            DMatrix::from_fn(obs_dim, latent_dim, |_, _| {
                rng.sample::<f64, _>(StandardNormal) * scale
            });
        let svd = matrix.clone().svd(false, false);
        let max = svd.singular_values.max();
        let min = svd.singular_values.min();
        if min > 0.0 && max / min < MAX_OBSERVATION_CONDITION {
            let offset =
                DVector::from_fn(obs_dim, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.1);
            return Ok(AffineObservation::Affine { matrix, offset });
        }
    }
    Err(Error::Numeric(format!(
        "no observation map with condition number below {MAX_OBSERVATION_CONDITION} found in {MAX_OBSERVATION_ATTEMPTS} attempts"
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticWorldConfig {
    /// Latent and embedding dimension D.
    pub latent_dim: usize,
    /// Number of shared latent samples N.
    pub samples: usize,
    /// Number of ensemble members M, one orthogonal transform each.
    pub members: usize,
    /// Concentration of member noise; 0 disables noise entirely.
    pub noise_kappa: f64,
    /// Observation space dimension; `None` observes latents directly.
    pub observation_dim: Option<usize>,
    pub seed: u64,
}

impl SyntheticWorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 2 {
            return Err(Error::DimensionTooSmall(self.latent_dim));
        }
        if self.samples == 0 {
            return Err(Error::InvalidConfig("samples must be at least 1".into()));
        }
        if self.members == 0 {
            return Err(Error::InvalidConfig("members must be at least 1".into()));
        }
        if !self.noise_kappa.is_finite() || self.noise_kappa < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise_kappa must be finite and non-negative, got {}",
                self.noise_kappa
            )));
        }
        if let Some(obs) = self.observation_dim {
            if obs < self.latent_dim {
                return Err(Error::InvalidConfig(format!(
                    "observation_dim {obs} must be at least latent_dim {}",
                    self.latent_dim
                )));
            }
        }
        Ok(())
    }
}

/// A generated world: shared latents, per-member transforms, observation map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: SyntheticWorldConfig,
    /// N x D unit rows.
    latents: DMatrix<f64>,
    /// One D x D orthogonal matrix per member.
    transforms: Vec<DMatrix<f64>>,
    observation: AffineObservation,
}

impl SyntheticWorld {
    pub fn generate(config: SyntheticWorldConfig) -> Result<Self> {
        config.validate()?;
        let latents = sample_uniform_sphere(
            config.samples,
            config.latent_dim,
            crate::seeding::derive_seed(config.seed, "latents", 0),
        )?;
        let transforms = (0..config.members)
            .map(|m| {
                random_orthogonal(
                    config.latent_dim,
                    crate::seeding::derive_seed(config.seed, "member-transform", m as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let observation = match config.observation_dim {
            None => AffineObservation::Identity {
                dim: config.latent_dim,
            },
            Some(obs_dim) => sample_observation(
                obs_dim,
                config.latent_dim,
                crate::seeding::derive_seed(config.seed, "observation", 0),
            )?,
        };
        Ok(Self {
            config,
            latents,
            transforms,
            observation,
        })
    }

    pub fn latent(&self, n: usize) -> UnitVector {
        UnitVector::from_unit_unchecked(DVector::from_iterator(
            self.config.latent_dim,
            self.latents.row(n).iter().copied(),
        ))
    }

    /// Ground-truth latents as an embedding set.
    pub fn latent_set(&self) -> Result<EmbeddingSet> {
        EmbeddingSet::new(
            "synthetic-latents",
            DomainTag::Synthetic,
            self.latents.clone(),
            None,
        )
    }

    pub fn transform(&self, member: usize) -> Result<&DMatrix<f64>> {
        self.transforms.get(member).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "member index {member} out of range for {} members",
                self.transforms.len()
            ))
        })
    }

    pub fn observation(&self) -> &AffineObservation {
        &self.observation
    }

    /// Observation of latent `n`.
    pub fn observe(&self, n: usize) -> Result<DVector<f64>> {
        if n >= self.config.samples {
            return Err(Error::InvalidConfig(format!(
                "sample index {n} out of range for {} samples",
                self.config.samples
            )));
        }
        self.observation
            .apply(&DVector::from_iterator(
                self.config.latent_dim,
                self.latents.row(n).iter().copied(),
            ))
    }

    /// All observations, one column per sample.
    pub fn observations(&self) -> Result<DMatrix<f64>> {
        let cols = try_map_indexed(self.config.samples, |n| self.observe(n))?;
        let mut out = DMatrix::zeros(self.observation.observation_dim(), self.config.samples);
        for (n, col) in cols.into_iter().enumerate() {
            out.column_mut(n).copy_from(&col);
        }
        Ok(out)
    }

    /// What member `m` sees: its transform applied to every latent, with
    /// seeded concentration noise when `noise_kappa > 0`. Noise draws are
    /// keyed by (member, sample), independent of evaluation order.
    pub fn member_embeddings(&self, member: usize) -> Result<EmbeddingSet> {
        let transform = self.transform(member)?;
        let kappa = self.config.noise_kappa;
        let samples = self.config.samples;
        let rows = try_map_indexed(samples, |n| {
            let z = transform * self.latents.row(n).transpose();
            let exact = UnitVector::normalized(z).map_err(|e| e.at_row(n))?;
            if kappa == 0.0 {
                return Ok(exact);
            }
            let mut rng = rng_for(
                self.config.seed,
                "member-noise",
                (member as u64) * samples as u64 + n as u64,
            );
            perturb_on_sphere(&exact, kappa, &mut rng).map_err(|e| e.at_row(n))
        })?;
        let mut matrix = DMatrix::zeros(samples, self.config.latent_dim);
        for (n, row) in rows.iter().enumerate() {
            matrix.row_mut(n).copy_from(&row.as_vector().transpose());
        }
        EmbeddingSet::new(
            format!("synthetic-member-{member}"),
            DomainTag::Synthetic,
            matrix,
            None,
        )
    }
}
