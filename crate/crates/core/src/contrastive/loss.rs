//! InfoNCE loss: softmax cross-entropy over one positive and M negative
//! similarities at temperature tau, stabilized by max subtraction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::UnitVector;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InfoNceConfig {
    /// Softmax temperature tau.
    pub temperature: f64,
    /// Number of negatives M per anchor.
    pub num_negatives: usize,
}

impl Default for InfoNceConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            num_negatives: 16,
        }
    }
}

impl InfoNceConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if self.num_negatives == 0 {
            return Err(Error::InvalidConfig(
                "num_negatives must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Loss given one positive similarity and the negative similarities:
/// `-log(exp(s_pos/tau) / (exp(s_pos/tau) + sum_i exp(s_neg_i/tau)))`,
/// evaluated as a stabilized log-sum-exp.
fn loss_from_similarities(s_pos: f64, s_negs: &[f64], temperature: f64) -> f64 {
    let mut max_logit = s_pos / temperature;
    for &s in s_negs {
        max_logit = max_logit.max(s / temperature);
    }
    let pos_term = (s_pos / temperature - max_logit).exp();
    let mut denom = pos_term;
    for &s in s_negs {
        denom += (s / temperature - max_logit).exp();
    }
    -(s_pos / temperature - max_logit) + denom.ln()
}

/// InfoNCE loss for a single anchor.
pub fn infonce_loss(
    anchor: &UnitVector,
    positive: &UnitVector,
    negatives: &[UnitVector],
    cfg: &InfoNceConfig,
) -> Result<f64> {
    cfg.validate()?;
    if negatives.len() != cfg.num_negatives {
        return Err(Error::InvalidConfig(format!(
            "expected {} negatives, got {}",
            cfg.num_negatives,
            negatives.len()
        )));
    }
    let dim = anchor.dim();
    if positive.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: positive.dim(),
        });
    }
    for n in negatives {
        if n.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: n.dim(),
            });
        }
    }
    let s_pos = anchor.as_vector().dot(positive.as_vector());
    let s_negs: Vec<f64> = negatives
        .iter()
        .map(|n| anchor.as_vector().dot(n.as_vector()))
        .collect();
    Ok(loss_from_similarities(s_pos, &s_negs, cfg.temperature))
}

/// Mean InfoNCE loss over a batch plus its gradient with respect to the
/// embeddings.
///
/// `anchors` and `positives` are D x B unit columns; `negatives[b]` indexes
/// columns of `anchors` serving as anchor b's negatives (uniform draws from
/// the batch excluding b, with replacement). Returns the mean loss and the
/// gradients d(mean loss)/d(anchors) and d(mean loss)/d(positives),
/// including the cross-sample terms that arise because negatives are other
/// anchors' embeddings.
pub fn infonce_batch(
    anchors: &DMatrix<f64>,
    positives: &DMatrix<f64>,
    negatives: &[Vec<usize>],
    cfg: &InfoNceConfig,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    cfg.validate()?;
    let (dim, batch) = (anchors.nrows(), anchors.ncols());
    if positives.nrows() != dim || positives.ncols() != batch {
        return Err(Error::DimensionMismatch {
            expected: batch,
            got: positives.ncols(),
        });
    }
    if negatives.len() != batch {
        return Err(Error::DimensionMismatch {
            expected: batch,
            got: negatives.len(),
        });
    }
    if batch == 0 {
        return Err(Error::EmptyInput {
            what: "infonce batch",
        });
    }

    let inv_tau = 1.0 / cfg.temperature;
    let scale = 1.0 / batch as f64;
    let mut grad_anchors = DMatrix::zeros(dim, batch);
    let mut grad_positives = DMatrix::zeros(dim, batch);
    let mut loss_sum = 0.0;

    for b in 0..batch {
        let idxs = &negatives[b];
        if idxs.len() != cfg.num_negatives {
            return Err(Error::InvalidConfig(format!(
                "anchor {b}: expected {} negatives, got {}",
                cfg.num_negatives,
                idxs.len()
            )));
        }
        let anchor = anchors.column(b);
        let s_pos = anchor.dot(&positives.column(b));
        let s_negs: Vec<f64> = idxs
            .iter()
            .map(|&j| anchor.dot(&anchors.column(j)))
            .collect();
        loss_sum += loss_from_similarities(s_pos, &s_negs, cfg.temperature);

        // Softmax weights over {positive, negatives}.
        let mut max_logit = s_pos * inv_tau;
        for &s in &s_negs {
            max_logit = max_logit.max(s * inv_tau);
        }
        let e_pos = (s_pos * inv_tau - max_logit).exp();
        let e_negs: Vec<f64> = s_negs.iter().map(|&s| (s * inv_tau - max_logit).exp()).collect();
        let denom = e_pos + e_negs.iter().sum::<f64>();
        let p_pos = e_pos / denom;

        // d(loss_b)/d(s_pos) = (p_pos - 1)/tau; d(loss_b)/d(s_neg_i) = p_i/tau.
        let w_pos = (p_pos - 1.0) * inv_tau * scale;
        grad_anchors
            .column_mut(b)
            .axpy(w_pos, &positives.column(b), 1.0);
        grad_positives
            .column_mut(b)
            .axpy(w_pos, &anchor, 1.0);
        for (i, &j) in idxs.iter().enumerate() {
            let w_neg = (e_negs[i] / denom) * inv_tau * scale;
            grad_anchors
                .column_mut(b)
                .axpy(w_neg, &anchors.column(j), 1.0);
            let anchor_b = anchors.column(b).clone_owned();
            grad_anchors.column_mut(j).axpy(w_neg, &anchor_b, 1.0);
        }
    }

    let mean_loss = loss_sum * scale;
    if !mean_loss.is_finite() {
        return Err(Error::Numeric(format!(
            "InfoNCE batch loss is not finite ({mean_loss})"
        )));
    }
    Ok((mean_loss, grad_anchors, grad_positives))
}
