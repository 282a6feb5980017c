//! Retrieval metrics over an embedding set that serves as both query and
//! reference pool: recall at 1 and mean average precision at R, plus a
//! brute-force oracle used to cross-check them in tests.
//!
//! Conventions shared by every path: the query itself is excluded from its
//! candidate pool, candidates are ranked by descending cosine similarity,
//! and ties break toward the lower index. A query's reference count R_q is
//! its class size minus one, so a perfect score is attainable.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{DomainTag, EmbeddingSet};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r_at_1: f64,
    pub map_at_r: f64,
    pub n_queries: usize,
    pub domain: DomainTag,
}

/// Sequential dot product of rows `i` and `j`. Both the fast paths and the
/// oracle accumulate in index order, so their similarities are bitwise equal.
fn row_dot(set: &EmbeddingSet, i: usize, j: usize) -> f64 {
    let m = set.matrix();
    let mut acc = 0.0;
    for k in 0..m.ncols() {
        acc += m[(i, k)] * m[(j, k)];
    }
    acc
}

fn require_labels(set: &EmbeddingSet) -> Result<&[i32]> {
    if set.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "metrics need at least 2 samples, got {}",
            set.len()
        )));
    }
    set.labels().ok_or(Error::MissingLabels)
}

fn class_sizes(labels: &[i32]) -> HashMap<i32, usize> {
    let mut sizes = HashMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0) += 1;
    }
    sizes
}

/// Fraction of queries whose nearest neighbor (self excluded) shares the
/// query's label.
pub fn recall_at_1(set: &EmbeddingSet) -> Result<f64> {
    let labels = require_labels(set)?;
    let n = set.len();
    let hits = map_indexed(n, |q| {
        let mut best_sim = f64::NEG_INFINITY;
        let mut best_idx = usize::MAX;
        for j in 0..n {
            if j == q {
                continue;
            }
            let sim = row_dot(set, q, j);
            // Strict inequality keeps the lowest index on ties because
            // candidates are scanned in ascending order.
            if sim > best_sim {
                best_sim = sim;
                best_idx = j;
            }
        }
        u64::from(labels[best_idx] == labels[q])
    });
    let correct: u64 = hits.iter().sum();
    Ok(correct as f64 / n as f64)
}

/// Mean average precision at R, with R_q = (size of q's class) - 1. Precision
/// terms count only at ranks holding a same-class candidate.
pub fn map_at_r(set: &EmbeddingSet) -> Result<f64> {
    let labels = require_labels(set)?;
    for (&label, &size) in &class_sizes(labels) {
        if size < 2 {
            return Err(Error::SingletonClass { label });
        }
    }
    let n = set.len();
    let sizes = class_sizes(labels);
    let per_query = map_indexed(n, |q| {
        let r_q = sizes[&labels[q]] - 1;
        let mut ranked: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != q)
            .map(|j| (row_dot(set, q, j), j))
            .collect();
        ranked.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut correct_so_far = 0usize;
        let mut ap = 0.0;
        for (k, &(_, idx)) in ranked.iter().take(r_q).enumerate() {
            if labels[idx] == labels[q] {
                correct_so_far += 1;
                ap += correct_so_far as f64 / (k + 1) as f64;
            }
        }
        ap / r_q as f64
    });
    Ok(mean_in_sorted_order(per_query))
}

/// Mean with summands sorted first: float addition is not associative, so
/// this keeps the result exactly invariant under query permutations.
fn mean_in_sorted_order(mut values: Vec<f64>) -> f64 {
    let n = values.len();
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum::<f64>() / n as f64
}

/// Both metrics plus query count and domain.
pub fn evaluate(set: &EmbeddingSet) -> Result<MetricsReport> {
    Ok(MetricsReport {
        r_at_1: recall_at_1(set)?,
        map_at_r: map_at_r(set)?,
        n_queries: set.len(),
        domain: set.domain(),
    })
}

/// Independent O(N^2) re-implementation: materializes the full similarity
/// matrix, ranks every candidate list with an explicit sort, and recounts
/// both metrics from the rankings. Used to cross-check the fast paths.
pub fn brute_force_oracle(set: &EmbeddingSet) -> Result<MetricsReport> {
    let labels = require_labels(set)?;
    let n = set.len();
    let mut similarities = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            similarities[i][j] = row_dot(set, i, j);
        }
    }

    let mut sizes: HashMap<i32, usize> = HashMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0) += 1;
    }
    for (&label, &size) in &sizes {
        if size < 2 {
            return Err(Error::SingletonClass { label });
        }
    }

    let mut r1_correct = 0usize;
    let mut ap_values = Vec::with_capacity(n);
    for q in 0..n {
        let mut candidates: Vec<usize> = (0..n).filter(|&j| j != q).collect();
        candidates.sort_by(|&a, &b| {
            similarities[q][b]
                .total_cmp(&similarities[q][a])
                .then(a.cmp(&b))
        });

        if labels[candidates[0]] == labels[q] {
            r1_correct += 1;
        }

        let r_q = sizes[&labels[q]] - 1;
        let mut hits = 0usize;
        let mut ap = 0.0f64;
        for k in 1..=r_q {
            if labels[candidates[k - 1]] == labels[q] {
                hits += 1;
                ap += hits as f64 / k as f64;
            }
        }
        ap_values.push(ap / r_q as f64);
    }
    // Sorted summation mirrors the fast path's permutation-invariant mean.
    ap_values.sort_unstable_by(f64::total_cmp);

    Ok(MetricsReport {
        r_at_1: r1_correct as f64 / n as f64,
        map_at_r: ap_values.iter().sum::<f64>() / n as f64,
        n_queries: n,
        domain: set.domain(),
    })
}
