//! Orthogonal alignment between embedding spaces: a soft-orthogonality
//! geodesic objective trained by SGD, and a closed-form Procrustes solution
//! used as a testing oracle.
//!
//! The learned map sends source embeddings into the anchor's space:
//! `R v_n ~ u_n` for paired rows. `R v` is re-normalized before the arccos —
//! a non-orthogonal intermediate `R` breaks unit norm, and arccos needs unit
//! inputs. The penalty still drives `R` toward orthogonality.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::parallel::try_map_indexed;
use crate::seeding::rng_for;

/// Cosine clamp inside the loss; bounds the 1/sqrt(1-s^2) gradient factor,
/// which is singular at exact alignment.
const COSINE_CLAMP: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub anchor_id: String,
    pub source_id: String,
    /// D x D map applied to source embeddings.
    pub matrix: DMatrix<f64>,
    pub lambda: f64,
    pub final_align_loss: f64,
    /// ||R^T R - I||_F at the end of training.
    pub orthogonality_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda_grid: Vec<f64>,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AlignTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            lambda_grid: vec![0.1, 0.3, 0.5],
            batch_size: 256,
            seed: 0,
        }
    }
}

impl AlignTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "alignment training needs at least 1 epoch".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidConfig("lambda grid is empty".into()));
        }
        if let Some(bad) = self
            .lambda_grid
            .iter()
            .find(|l| !l.is_finite() || **l < 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "lambda values must be finite and nonnegative, got {bad}"
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

fn check_paired(anchor: &EmbeddingSet, source: &EmbeddingSet) -> Result<()> {
    if anchor.len() != source.len() {
        return Err(Error::DimensionMismatch {
            expected: anchor.len(),
            got: source.len(),
        });
    }
    if anchor.dim() != source.dim() {
        return Err(Error::DimensionMismatch {
            expected: anchor.dim(),
            got: source.dim(),
        });
    }
    Ok(())
}

fn check_map_shape(r: &DMatrix<f64>, dim: usize) -> Result<()> {
    if r.nrows() != dim || r.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: if r.nrows() != dim { r.nrows() } else { r.ncols() },
        });
    }
    Ok(())
}

/// ||R^T R - I||_F.
pub fn orthogonality_residual(r: &DMatrix<f64>) -> f64 {
    let d = r.ncols();
    (r.transpose() * r - DMatrix::<f64>::identity(d, d)).norm()
}

/// Gradient of ||R^T R - I||_F^2; the lambda factor is applied by callers.
fn penalty_gradient(r: &DMatrix<f64>) -> DMatrix<f64> {
    let d = r.ncols();
    let residual = r.transpose() * r - DMatrix::<f64>::identity(d, d);
    4.0 * r * residual
}

/// One pass over the rows: mean geodesic term, and optionally its gradient.
/// Shared by the public loss/gradient entry points so they can never drift.
fn geodesic_pass(
    r: &DMatrix<f64>,
    anchor: &EmbeddingSet,
    source: &EmbeddingSet,
    mut grad: Option<&mut DMatrix<f64>>,
) -> Result<f64> {
    check_paired(anchor, source)?;
    check_map_shape(r, anchor.dim())?;
    let n = anchor.len();
    let a = anchor.matrix();
    let b = source.matrix();
    // Row n of W is (R v_n)^T.
    let w = b * r.transpose();

    let mut total = 0.0;
    let mut p_rows: Option<DMatrix<f64>> = grad
        .as_ref()
        .map(|_| DMatrix::zeros(n, anchor.dim()));
    for i in 0..n {
        let w_i = w.row(i);
        let norm = w_i.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numeric(format!(
                "aligned embedding for row {i} has norm {norm}"
            )).at_row(i));
        }
        let raw = a.row(i).dot(&w_i) / norm;
        let s = raw.clamp(-COSINE_CLAMP, COSINE_CLAMP);
        total += s.acos();
        if let Some(p) = p_rows.as_mut() {
            let coeff = 1.0 / (1.0 - s * s).sqrt();
            // d s / d w = (u - s * w_hat) / ||w||, then d s / d R = (...) v^T.
            for j in 0..anchor.dim() {
                p[(i, j)] = coeff * (a[(i, j)] - s * w_i[j] / norm) / norm;
            }
        }
    }
    let mean = total / n as f64;
    if let (Some(g), Some(p)) = (grad.take(), p_rows) {
        *g = -(p.transpose() * b) / n as f64;
    }
    Ok(mean)
}

/// Mean geodesic misalignment (1/N) sum arccos(clamp(u . normalize(R v))).
pub fn geodesic_term(
    r: &DMatrix<f64>,
    anchor: &EmbeddingSet,
    source: &EmbeddingSet,
) -> Result<f64> {
    geodesic_pass(r, anchor, source, None)
}

/// Full objective: geodesic term plus lambda * ||R^T R - I||_F^2.
pub fn align_loss(
    r: &DMatrix<f64>,
    anchor: &EmbeddingSet,
    source: &EmbeddingSet,
    lambda: f64,
) -> Result<f64> {
    let geo = geodesic_pass(r, anchor, source, None)?;
    let res = orthogonality_residual(r);
    Ok(geo + lambda * res * res)
}

/// Exact analytic gradient of `align_loss` with respect to R.
pub fn align_gradient(
    r: &DMatrix<f64>,
    anchor: &EmbeddingSet,
    source: &EmbeddingSet,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    let mut grad = DMatrix::zeros(r.nrows(), r.ncols());
    geodesic_pass(r, anchor, source, Some(&mut grad))?;
    grad += lambda * penalty_gradient(r);
    Ok(grad)
}

fn loss_and_gradient(
    r: &DMatrix<f64>,
    anchor: &EmbeddingSet,
    source: &EmbeddingSet,
    lambda: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let mut grad = DMatrix::zeros(r.nrows(), r.ncols());
    let geo = geodesic_pass(r, anchor, source, Some(&mut grad))?;
    let res = orthogonality_residual(r);
    grad += lambda * penalty_gradient(r);
    Ok((geo + lambda * res * res, grad))
}

fn train_single_lambda(
    anchor: &EmbeddingSet,
    source: &EmbeddingSet,
    lambda: f64,
    lambda_index: usize,
    cfg: &AlignTrainConfig,
) -> Result<DMatrix<f64>> {
    let n = anchor.len();
    let dim = anchor.dim();
    let mut r = DMatrix::<f64>::identity(dim, dim);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(
            cfg.seed,
            "align-shuffle",
            (lambda_index * cfg.epochs + epoch) as u64,
        ));
        for chunk in order.chunks(cfg.batch_size) {
            let batch_anchor = anchor.select(chunk)?;
            let batch_source = source.select(chunk)?;
            let (loss, grad) = loss_and_gradient(&r, &batch_anchor, &batch_source, lambda)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "alignment loss became {loss} at epoch {epoch} (lambda {lambda}); aborting"
                )));
            }
            r -= cfg.learning_rate * grad;
        }
    }
    Ok(r)
}

/// Learns the map from `source` space to `anchor` space by mini-batch SGD
/// from an identity initialization. With a multi-entry lambda grid, each
/// lambda trains on a 90% split and the winner is the one with the lowest
/// mean geodesic term on the held-out 10%.
pub fn train_alignment(
    anchor: &EmbeddingSet,
    source: &EmbeddingSet,
    cfg: &AlignTrainConfig,
) -> Result<AlignmentMap> {
    cfg.validate()?;
    check_paired(anchor, source)?;
    let n = anchor.len();
    if n < 2 * cfg.batch_size {
        return Err(Error::InvalidConfig(format!(
            "alignment needs at least {} samples (2 x batch_size), got {n}",
            2 * cfg.batch_size
        )));
    }

    let (best_r, best_lambda) = if cfg.lambda_grid.len() == 1 {
        let lambda = cfg.lambda_grid[0];
        (train_single_lambda(anchor, source, lambda, 0, cfg)?, lambda)
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(cfg.seed, "align-holdout", 0));
        let holdout_len = (n / 10).max(1);
        let (holdout_idx, train_idx) = order.split_at(holdout_len);
        let train_anchor = anchor.select(train_idx)?;
        let train_source = source.select(train_idx)?;
        let holdout_anchor = anchor.select(holdout_idx)?;
        let holdout_source = source.select(holdout_idx)?;

        let mut best: Option<(DMatrix<f64>, f64, f64)> = None;
        for (li, &lambda) in cfg.lambda_grid.iter().enumerate() {
            let r = train_single_lambda(&train_anchor, &train_source, lambda, li, cfg)?;
            let held = geodesic_term(&r, &holdout_anchor, &holdout_source)?;
            if best.as_ref().is_none_or(|(_, _, score)| held < *score) {
                best = Some((r, lambda, held));
            }
        }
        let (r, lambda, _) = best.expect("grid is nonempty");
        (r, lambda)
    };

    let final_align_loss = align_loss(&best_r, anchor, source, best_lambda)?;
    let residual = orthogonality_residual(&best_r);
    Ok(AlignmentMap {
        anchor_id: anchor.encoder_id().to_string(),
        source_id: source.encoder_id().to_string(),
        matrix: best_r,
        lambda: best_lambda,
        final_align_loss,
        orthogonality_residual: residual,
    })
}

/// Closed-form orthogonal alignment: R = U V^T from the SVD of the
/// cross-covariance sum_n u_n v_n^T. Exact on noise-free data; used to
/// cross-check the trained maps.
pub fn procrustes_oracle(anchor: &EmbeddingSet, source: &EmbeddingSet) -> Result<DMatrix<f64>> {
    check_paired(anchor, source)?;
    let cross = anchor.matrix().transpose() * source.matrix();
    let svd = cross.clone().svd(true, true);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    if sigma_min < 1e-12 {
        return Err(Error::RankDeficient { sigma_min });
    }
    let u = svd.u.ok_or_else(|| Error::Numeric("SVD produced no U factor".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD produced no V^T factor".into()))?;
    Ok(u * v_t)
}

/// Trains one map per non-anchor set against the anchor, in input order.
/// Each map depends only on its own pair, so the trainings run concurrently.
pub fn align_ensemble(
    sets: &[EmbeddingSet],
    anchor_index: usize,
    cfg: &AlignTrainConfig,
) -> Result<Vec<AlignmentMap>> {
    if sets.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "ensembles need at least 2 members, got {}",
            sets.len()
        )));
    }
    if anchor_index >= sets.len() {
        return Err(Error::InvalidConfig(format!(
            "anchor index {anchor_index} out of range for {} members",
            sets.len()
        )));
    }
    let anchor = &sets[anchor_index];
    let others: Vec<&EmbeddingSet> = sets
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != anchor_index)
        .map(|(_, s)| s)
        .collect();
    try_map_indexed(others.len(), |i| train_alignment(anchor, others[i], cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::DomainTag;
    use crate::synthetic::{perturb_on_sphere, random_orthogonal, sample_uniform_sphere};
    use crate::seeding::rng_for;
    use nalgebra::DVector;

    fn unit_set(id: &str, n: usize, d: usize, seed: u64) -> EmbeddingSet {
        let rows = sample_uniform_sphere(n, d, seed).unwrap();
        EmbeddingSet::new(id, DomainTag::Synthetic, rows, None).unwrap()
    }

    /// source rows v_n = R_true^T u_n, so R_true v_n = u_n exactly.
    /// `det` picks the orthogonal-group component of the planted map: SGD
    /// from the identity reaches det = -1 maps only by passing through
    /// non-orthogonal territory, which the lambda grid must arbitrate.
    fn rotated_pair(
        n: usize,
        d: usize,
        seed: u64,
        det: f64,
    ) -> (EmbeddingSet, EmbeddingSet, DMatrix<f64>) {
        let anchor = unit_set("anchor", n, d, seed);
        let mut r_true = random_orthogonal(d, seed ^ 0x5ca1ab1e).unwrap();
        if r_true.determinant() * det < 0.0 {
            let flipped = r_true.column(0) * -1.0;
            r_true.set_column(0, &flipped);
        }
        let source_rows = anchor.matrix() * &r_true;
        let source = anchor.with_matrix("source", source_rows).unwrap();
        (anchor, source, r_true)
    }

    /// Literal transcription of the objective, one row at a time.
    fn align_loss_reference(
        r: &DMatrix<f64>,
        anchor: &EmbeddingSet,
        source: &EmbeddingSet,
        lambda: f64,
    ) -> f64 {
        let n = anchor.len();
        let mut geo = 0.0;
        for i in 0..n {
            let u = anchor.matrix().row(i).transpose();
            let w = r * source.matrix().row(i).transpose();
            let s = (u.dot(&w) / w.norm()).clamp(-COSINE_CLAMP, COSINE_CLAMP);
            geo += s.acos();
        }
        let d = r.ncols();
        let res = (r.transpose() * r - DMatrix::<f64>::identity(d, d)).norm();
        geo / n as f64 + lambda * res * res
    }

    #[test]
    fn identity_map_on_identical_sets_scores_zero_loss() {
        let a = unit_set("a", 16, 5, 1);
        let r = DMatrix::identity(5, 5);
        let loss = align_loss(&r, &a, &a, 0.5).unwrap();
        // arccos is clamped, so "zero" is acos(1 - 1e-7) per row.
        assert!(loss < 5e-4, "loss {loss}");
    }

    #[test]
    fn scaled_identity_pays_only_the_penalty() {
        let a = unit_set("a", 16, 8, 2);
        let r = DMatrix::<f64>::identity(8, 8) * 2.0;
        // ||4I - I||_F^2 = 9 * 8 = 72, times lambda 0.5 = 36; scaling leaves
        // the re-normalized directions unchanged.
        let loss = align_loss(&r, &a, &a, 0.5).unwrap();
        let geo = geodesic_term(&r, &a, &a).unwrap();
        assert!((loss - geo - 36.0).abs() < 1e-12, "loss {loss} geo {geo}");
        assert!(geo < 5e-4);
    }

    #[test]
    fn loss_matches_elementwise_reference() {
        for seed in 0..5u64 {
            let a = unit_set("a", 24, 6, seed * 2 + 1);
            let b = unit_set("b", 24, 6, seed * 2 + 2);
            let mut rng = rng_for(seed, "loss-ref", 0);
            let r = DMatrix::from_fn(6, 6, |_, _| {
                rand::Rng::random_range(&mut rng, -1.0..1.0)
            });
            let lambda = 0.3;
            let fast = align_loss(&r, &a, &b, lambda).unwrap();
            let slow = align_loss_reference(&r, &a, &b, lambda);
            assert!((fast - slow).abs() < 1e-12, "fast {fast} slow {slow}");
        }
    }

    #[test]
    fn mismatched_sets_are_rejected() {
        let a = unit_set("a", 10, 4, 3);
        let b = unit_set("b", 12, 4, 4);
        let c = unit_set("c", 10, 5, 5);
        let r = DMatrix::identity(4, 4);
        assert!(matches!(
            align_loss(&r, &a, &b, 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            align_loss(&r, &a, &c, 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
        let r3 = DMatrix::identity(3, 3);
        assert!(matches!(
            align_loss(&r3, &a, &a, 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        for seed in 0..6u64 {
            let a = unit_set("a", 32, 8, 100 + seed);
            let b = unit_set("b", 32, 8, 200 + seed);
            let mut rng = rng_for(seed, "fd", 0);
            // Near-orthogonal start keeps cosines clear of the clamp.
            let mut r = random_orthogonal(8, 300 + seed).unwrap();
            r.apply(|x| *x += rand::Rng::random_range(&mut rng, -0.05..0.05));
            let lambda = [0.0, 0.1, 0.5][seed as usize % 3];
            let grad = align_gradient(&r, &a, &b, lambda).unwrap();
            let mut max_rel: f64 = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    let mut plus = r.clone();
                    plus[(i, j)] += h;
                    let mut minus = r.clone();
                    minus[(i, j)] -= h;
                    let fd = (align_loss(&plus, &a, &b, lambda).unwrap()
                        - align_loss(&minus, &a, &b, lambda).unwrap())
                        / (2.0 * h);
                    let rel =
                        (grad[(i, j)] - fd).abs() / grad[(i, j)].abs().max(fd.abs()).max(1e-6);
                    max_rel = max_rel.max(rel);
                }
            }
            assert!(max_rel < 1e-4, "seed {seed}: max rel err {max_rel}");
        }
    }

    #[test]
    fn gradient_vanishes_at_the_global_minimum() {
        let a = unit_set("a", 20, 5, 7);
        let r = DMatrix::identity(5, 5);
        let grad = align_gradient(&r, &a, &a, 0.5).unwrap();
        // The clamp keeps each row's cosine at 1 - 1e-7, giving a bounded,
        // tiny residual gradient instead of a singular one.
        assert!(grad.norm() < 1e-2, "gradient norm {}", grad.norm());
        assert!(penalty_gradient(&r).norm() == 0.0);
    }

    #[test]
    fn penalty_gradient_matches_diagonal_closed_form() {
        // At R = diag(d), the gradient of ||R^T R - I||_F^2 is
        // diag(4 d (d^2 - 1)).
        let d_vals = [0.5, 1.0, -1.3, 2.0];
        let r = DMatrix::from_diagonal(&DVector::from_row_slice(&d_vals));
        let grad = penalty_gradient(&r);
        for (i, &di) in d_vals.iter().enumerate() {
            for j in 0..d_vals.len() {
                let expected = if i == j { 4.0 * di * (di * di - 1.0) } else { 0.0 };
                assert!((grad[(i, j)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn training_recovers_a_planted_rotation() {
        let (anchor, source, r_true) = rotated_pair(1024, 6, 11, 1.0);
        // On exact data the objective is a mean of |angle| terms, so
        // fixed-lr SGD stalls in a noise ball of radius ~ lr; the defaults
        // (lr 0.1, 20 epochs) are tuned for large noisy runs, not this
        // fixture.
        let cfg = AlignTrainConfig {
            epochs: 40,
            learning_rate: 0.05,
            batch_size: 128,
            ..AlignTrainConfig::default()
        };
        let map = train_alignment(&anchor, &source, &cfg).unwrap();
        let geo = geodesic_term(&map.matrix, &anchor, &source).unwrap();
        assert!(geo < 1e-2, "mean misalignment {geo} rad");
        assert!(
            (&map.matrix - &r_true).norm() < 0.1,
            "||R - R_true||_F = {}",
            (&map.matrix - &r_true).norm()
        );
        assert!(cfg.lambda_grid.contains(&map.lambda));
        // Diagnostics are recomputable from the stored matrix.
        let recomputed = orthogonality_residual(&map.matrix);
        assert!((map.orthogonality_residual - recomputed).abs() < 1e-9);

        // The oracle solves the same instance in closed form; training
        // should land within 10x of its geodesic term.
        let oracle = procrustes_oracle(&anchor, &source).unwrap();
        let oracle_geo = geodesic_term(&oracle, &anchor, &source).unwrap();
        assert!(geo < 10.0 * oracle_geo.max(1e-3), "geo {geo} oracle {oracle_geo}");
    }

    #[test]
    fn strong_penalty_drives_residual_below_threshold() {
        // With lambda fixed at 0.5 and a rotation reachable inside the
        // orthogonal manifold, the trained map is orthogonal to within 1e-2.
        let (anchor, source, r_true) = rotated_pair(1000, 8, 7, 1.0);
        let cfg = AlignTrainConfig {
            epochs: 120,
            learning_rate: 0.02,
            lambda_grid: vec![0.5],
            batch_size: 64,
            seed: 0,
        };
        let map = train_alignment(&anchor, &source, &cfg).unwrap();
        assert!(
            map.orthogonality_residual < 1e-2,
            "residual {}",
            map.orthogonality_residual
        );
        let geo = geodesic_term(&map.matrix, &anchor, &source).unwrap();
        assert!(geo < 1e-2, "geo {geo}");
        assert!((&map.matrix - &r_true).norm() < 0.1);
    }

    #[test]
    fn reflections_are_reached_through_the_weak_lambda_passage() {
        // A planted map with det = -1 cannot be reached from the identity
        // without leaving the orthogonal manifold. A strong penalty pins R
        // near SO(D) and stalls; the weak lambda run crosses and wins the
        // held-out selection.
        let (anchor, source, r_true) = rotated_pair(1000, 8, 8, -1.0);
        let cfg = AlignTrainConfig {
            epochs: 80,
            learning_rate: 0.03,
            batch_size: 64,
            ..AlignTrainConfig::default()
        };
        let map = train_alignment(&anchor, &source, &cfg).unwrap();
        let geo = geodesic_term(&map.matrix, &anchor, &source).unwrap();
        assert!(geo < 1e-2, "mean misalignment {geo} rad");
        assert!((&map.matrix - &r_true).norm() < 0.1);
        assert_eq!(map.lambda, 0.1, "expected the weakest penalty to win");
    }

    #[test]
    fn self_alignment_stays_at_identity() {
        let a = unit_set("a", 1000, 5, 13);
        // R starts at the optimum; a small step size keeps the SGD noise
        // ball inside the 1e-3 budget.
        let cfg = AlignTrainConfig {
            epochs: 20,
            learning_rate: 0.003,
            batch_size: 64,
            ..AlignTrainConfig::default()
        };
        let map = train_alignment(&a, &a, &cfg).unwrap();
        let dev = (&map.matrix - DMatrix::<f64>::identity(5, 5)).norm();
        assert!(dev < 1e-3, "||R - I||_F = {dev}");
    }

    #[test]
    fn training_is_deterministic_and_respects_sample_minimum() {
        let (anchor, source, _) = rotated_pair(128, 4, 17, 1.0);
        let cfg = AlignTrainConfig {
            epochs: 5,
            batch_size: 32,
            ..AlignTrainConfig::default()
        };
        let m1 = train_alignment(&anchor, &source, &cfg).unwrap();
        let m2 = train_alignment(&anchor, &source, &cfg).unwrap();
        assert_eq!(m1.matrix, m2.matrix);
        assert_eq!(m1.lambda, m2.lambda);

        let starved = AlignTrainConfig {
            batch_size: 65,
            ..cfg
        };
        assert!(matches!(
            train_alignment(&anchor, &source, &starved),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn alignment_is_equivariant_to_source_rotations() {
        let (anchor, source, _) = rotated_pair(1000, 5, 19, 1.0);
        let mut q = random_orthogonal(5, 23).unwrap();
        if q.determinant() < 0.0 {
            let flipped = q.column(0) * -1.0;
            q.set_column(0, &flipped);
        }
        // Rows become (Q v_n)^T = v_n^T Q^T.
        let rotated = source
            .with_matrix("source-q", source.matrix() * q.transpose())
            .unwrap();
        let cfg = AlignTrainConfig {
            epochs: 80,
            learning_rate: 0.02,
            batch_size: 64,
            ..AlignTrainConfig::default()
        };
        let plain = train_alignment(&anchor, &source, &cfg).unwrap();
        let twisted = train_alignment(&anchor, &rotated, &cfg).unwrap();
        let geo_plain = geodesic_term(&plain.matrix, &anchor, &source).unwrap();
        // R' Q plays the role of R on the original pair.
        let geo_composed = geodesic_term(&(&twisted.matrix * &q), &anchor, &source).unwrap();
        assert!(
            (geo_plain - geo_composed).abs() < 1e-3,
            "plain {geo_plain} composed {geo_composed}"
        );
    }

    #[test]
    fn procrustes_recovers_exact_rotations() {
        let a = unit_set("a", 20, 6, 29);
        let r_id = procrustes_oracle(&a, &a).unwrap();
        assert!((&r_id - DMatrix::<f64>::identity(6, 6)).norm() < 1e-10);

        let (anchor, source, r_true) = rotated_pair(64, 6, 31, -1.0);
        let r = procrustes_oracle(&anchor, &source).unwrap();
        assert!((&r - &r_true).norm() < 1e-8, "err {}", (&r - &r_true).norm());
        let d = r.ncols();
        assert!((r.transpose() * &r - DMatrix::<f64>::identity(d, d)).norm() < 1e-10);
    }

    #[test]
    fn procrustes_rejects_rank_deficient_cross_covariance() {
        let a = unit_set("a", 12, 4, 37);
        // Every source row is the same direction: rank-1 cross-covariance.
        let row = sample_uniform_sphere(1, 4, 41).unwrap();
        let mut rows = DMatrix::zeros(12, 4);
        for i in 0..12 {
            rows.row_mut(i).copy_from(&row.row(0));
        }
        let b = a.with_matrix("b", rows).unwrap();
        assert!(matches!(
            procrustes_oracle(&a, &b),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn procrustes_error_grows_with_noise() {
        let n = 256;
        let d = 5;
        let anchor = unit_set("anchor", n, d, 43);
        let r_true = random_orthogonal(d, 47).unwrap();
        let mut errors = Vec::new();
        for (level, kappa) in [400.0, 50.0, 6.0].into_iter().enumerate() {
            let mut rng = rng_for(53, "noise", level as u64);
            let mut rows = DMatrix::zeros(n, d);
            for i in 0..n {
                let clean = anchor.row_unit(i);
                let noisy = perturb_on_sphere(&clean, kappa, &mut rng).unwrap();
                // v_n = R_true^T u~_n.
                rows.row_mut(i)
                    .copy_from(&(noisy.as_vector().transpose() * &r_true));
            }
            let source = anchor.with_matrix("noisy", rows).unwrap();
            let r = procrustes_oracle(&anchor, &source).unwrap();
            errors.push((&r - &r_true).norm());
        }
        assert!(
            errors[0] < errors[1] && errors[1] < errors[2],
            "errors not monotone: {errors:?}"
        );
    }

    #[test]
    fn ensemble_alignment_yields_one_map_per_non_anchor() {
        let n = 128;
        let d = 4;
        let anchor = unit_set("m0", n, d, 59);
        let mut sets = vec![anchor.clone()];
        for m in 1..5 {
            let r = random_orthogonal(d, 60 + m as u64).unwrap();
            sets.push(
                anchor
                    .with_matrix(format!("m{m}"), anchor.matrix() * &r)
                    .unwrap(),
            );
        }
        let cfg = AlignTrainConfig {
            epochs: 10,
            batch_size: 32,
            ..AlignTrainConfig::default()
        };
        let maps = align_ensemble(&sets, 0, &cfg).unwrap();
        assert_eq!(maps.len(), 4);
        for (i, map) in maps.iter().enumerate() {
            assert_eq!(map.anchor_id, "m0");
            assert_eq!(map.source_id, format!("m{}", i + 1));
        }

        let two = align_ensemble(&sets[..2], 0, &cfg).unwrap();
        assert_eq!(two.len(), 1);
        assert!(matches!(
            align_ensemble(&sets, 9, &cfg),
            Err(Error::InvalidConfig(_))
        ));

        // Order independence: each map depends only on its own pair.
        let mut swapped = sets.clone();
        swapped.swap(1, 3);
        let remapped = align_ensemble(&swapped, 0, &cfg).unwrap();
        assert_eq!(remapped[0].source_id, "m3");
        assert_eq!(remapped[0].matrix, maps[2].matrix);
        assert_eq!(remapped[2].matrix, maps[0].matrix);
    }
}
