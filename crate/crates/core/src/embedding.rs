//! Embedding sets: N unit vectors from one encoder over one domain, with
//! optional integer labels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{UnitVector, UNIT_NORM_TOLERANCE};

/// Provenance of the inputs an embedding set was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainTag {
    Id,
    OodColor,
    OodCrop,
    Synthetic,
}

impl DomainTag {
    /// Byte code used in the on-disk format.
    pub fn code(self) -> u8 {
        match self {
            DomainTag::Id => 0,
            DomainTag::OodColor => 1,
            DomainTag::OodCrop => 2,
            DomainTag::Synthetic => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DomainTag::Id),
            1 => Ok(DomainTag::OodColor),
            2 => Ok(DomainTag::OodCrop),
            3 => Ok(DomainTag::Synthetic),
            other => Err(Error::Format(format!("unknown domain tag code {other}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Id => "id",
            DomainTag::OodColor => "ood-color",
            DomainTag::OodCrop => "ood-crop",
            DomainTag::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" => Ok(DomainTag::Id),
            "ood-color" => Ok(DomainTag::OodColor),
            "ood-crop" => Ok(DomainTag::OodCrop),
            "synthetic" => Ok(DomainTag::Synthetic),
            other => Err(Error::InvalidConfig(format!(
                "unknown domain tag '{other}' (expected id, ood-color, ood-crop, or synthetic)"
            ))),
        }
    }
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// N x D matrix of unit-norm embedding rows plus provenance. Rows are
/// validated (norm within [`UNIT_NORM_TOLERANCE`] of 1) and rescaled to exact
/// unit length on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    encoder_id: String,
    domain: DomainTag,
    matrix: DMatrix<f64>,
    labels: Option<Vec<i32>>,
}

impl EmbeddingSet {
    pub fn new(
        encoder_id: impl Into<String>,
        domain: DomainTag,
        mut matrix: DMatrix<f64>,
        labels: Option<Vec<i32>>,
    ) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::EmptyInput {
                what: "embedding set rows",
            });
        }
        if matrix.ncols() < 2 {
            return Err(Error::DimensionTooSmall(matrix.ncols()));
        }
        if let Some(ref labels) = labels {
            if labels.len() != matrix.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: matrix.nrows(),
                    got: labels.len(),
                });
            }
        }
        for r in 0..matrix.nrows() {
            let norm = matrix.row(r).norm();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::NotUnitNorm {
                    norm,
                    tolerance: UNIT_NORM_TOLERANCE,
                }
                .at_row(r));
            }
            // Rows that are unit to f64 working precision pass through
            // bit-for-bit; only coarser rows (e.g. read back from f32
            // storage) get re-normalized.
            if (norm - 1.0).abs() > 1e-12 {
                let mut row = matrix.row_mut(r);
                row /= norm;
            }
        }
        Ok(Self {
            encoder_id: encoder_id.into(),
            domain,
            matrix,
            labels,
        })
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn domain(&self) -> DomainTag {
        self.domain
    }

    /// Number of samples N.
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Embedding dimension D.
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    /// Rows are samples, columns are embedding coordinates.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Row `n` as a unit vector. Rows were normalized at construction, so no
    /// re-validation happens here.
    pub fn row_unit(&self, n: usize) -> UnitVector {
        UnitVector::from_unit_unchecked(DVector::from_iterator(
            self.dim(),
            self.matrix.row(n).iter().copied(),
        ))
    }

    /// A derived set with the same samples but a new matrix (e.g. after an
    /// alignment map): labels and domain carry over.
    pub fn with_matrix(&self, encoder_id: impl Into<String>, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: matrix.nrows(),
            });
        }
        Self::new(encoder_id, self.domain, matrix, self.labels.clone())
    }

    /// Subset of rows, in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput {
                what: "selection indices",
            });
        }
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidConfig(format!(
                    "selection index {i} out of range for {} rows",
                    self.len()
                )));
            }
        }
        let matrix = DMatrix::from_fn(indices.len(), self.dim(), |r, c| {
            self.matrix[(indices[r], c)]
        });
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(Self {
            encoder_id: self.encoder_id.clone(),
            domain: self.domain,
            matrix,
            labels,
        })
    }
}
