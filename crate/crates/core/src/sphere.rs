//! Geometry of the unit hypersphere S^(D-1): geodesic distance, logarithmic
//! and exponential maps, and the Karcher (Fréchet) mean.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum deviation of an input vector's norm from 1 accepted by
/// [`UnitVector::new`]. Inputs further out are rejected rather than silently
/// projected.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// Dot products are clamped to `[-1 + DOT_CLAMP, 1 - DOT_CLAMP]` before
/// `acos`, keeping distances finite and the log map's `sin` division away
/// from zero at numerically coincident or antipodal points.
pub const DOT_CLAMP: f64 = 1e-12;

/// Points whose geodesic separation exceeds `pi - ANTIPODAL_MARGIN` are
/// rejected by the log map: the direction to an antipode is not unique.
pub const ANTIPODAL_MARGIN: f64 = 1e-6;

/// Tangent vectors handed to the exp map must satisfy
/// `|t . base| <= TANGENT_ORTHO_TOLERANCE`.
pub const TANGENT_ORTHO_TOLERANCE: f64 = 1e-6;

const MIN_DIRECTION_NORM: f64 = 1e-150;

/// A point on the unit hypersphere. Construction validates dimension and
/// norm, then rescales to unit length at machine precision, so downstream
/// operations never re-check.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    /// Accepts vectors of dimension >= 2 whose norm is within
    /// [`UNIT_NORM_TOLERANCE`] of 1, rescaling to exact unit length.
    pub fn new(v: DVector<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::DimensionTooSmall(v.len()));
        }
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::NotUnitNorm {
                norm,
                tolerance: UNIT_NORM_TOLERANCE,
            });
        }
        Ok(Self(v / norm))
    }

    /// Projects an arbitrary nonzero vector onto the sphere.
    pub fn normalized(v: DVector<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::DimensionTooSmall(v.len()));
        }
        let norm = v.norm();
        if !norm.is_finite() || norm < MIN_DIRECTION_NORM {
            return Err(Error::ZeroVector {
                context: "sphere projection",
            });
        }
        Ok(Self(v / norm))
    }

    /// Wraps a vector already known to be unit length (e.g. a validated
    /// embedding row). No check is performed.
    pub(crate) fn from_unit_unchecked(v: DVector<f64>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

impl AsRef<DVector<f64>> for UnitVector {
    fn as_ref(&self) -> &DVector<f64> {
        &self.0
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// `acos` of a clamped dot product; see [`DOT_CLAMP`].
pub(crate) fn clamped_acos(dot: f64) -> f64 {
    dot.clamp(-1.0 + DOT_CLAMP, 1.0 - DOT_CLAMP).acos()
}

/// Geodesic distance `arccos(u . v)`, in radians within `[0, pi]`.
pub fn geodesic_distance(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    check_dims(u.dim(), v.dim())?;
    Ok(clamped_acos(u.as_vector().dot(v.as_vector())))
}

/// Logarithmic map of `p` at `base`: the tangent vector at `base` whose norm
/// is the geodesic distance to `p` and whose direction points along the
/// connecting geodesic.
///
/// Coincident points (raw dot >= 1 - [`DOT_CLAMP`]) return the exact zero
/// tangent without any division. Antipodal points within
/// [`ANTIPODAL_MARGIN`] are an error.
pub fn log_map(base: &UnitVector, p: &UnitVector) -> Result<DVector<f64>> {
    check_dims(base.dim(), p.dim())?;
    let dot = base.as_vector().dot(p.as_vector());
    if dot >= 1.0 - DOT_CLAMP {
        return Ok(DVector::zeros(base.dim()));
    }
    if dot <= -(ANTIPODAL_MARGIN.cos()) {
        return Err(Error::AntipodalPoints);
    }
    let theta = clamped_acos(dot);
    // p - (base . p) base is the projection of p onto the tangent space at
    // base; rescaling by theta / sin(theta) restores geodesic length.
    let tangent = (p.as_vector() - base.as_vector() * dot) * (theta / theta.sin());
    Ok(tangent)
}

/// Exponential map: follows the geodesic from `base` in direction `tangent`
/// for arc length `|tangent|`. The result is renormalized before return.
pub fn exp_map(base: &UnitVector, tangent: &DVector<f64>) -> Result<UnitVector> {
    check_dims(base.dim(), tangent.len())?;
    let dot = tangent.dot(base.as_vector());
    if dot.abs() > TANGENT_ORTHO_TOLERANCE {
        return Err(Error::TangentNotOrthogonal { dot });
    }
    let theta = tangent.norm();
    if theta == 0.0 {
        return Ok(base.clone());
    }
    let point = base.as_vector() * theta.cos() + tangent * (theta.sin() / theta);
    UnitVector::normalized(point)
}

/// Iteration controls for [`karcher_mean`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KarcherConfig {
    /// Convergence threshold on the norm of the mean tangent update.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for KarcherConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

impl KarcherConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "karcher tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "karcher max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a Karcher mean computation.
#[derive(Debug, Clone)]
pub struct KarcherMean {
    pub mean: UnitVector,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the last mean tangent update examined.
    pub final_tangent_norm: f64,
}

/// Indices of `points` sorted lexicographically by component. Summing in this
/// order makes the mean exactly invariant to permutations of the input.
fn canonical_order(points: &[UnitVector]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (points[a].as_vector(), points[b].as_vector());
        for i in 0..pa.len() {
            match pa[i].total_cmp(&pb[i]) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        a.cmp(&b)
    });
    order
}

/// Karcher mean of points on the sphere via iterated tangent-space averaging:
/// starting from the normalized arithmetic mean, repeatedly lift the points
/// to the tangent space at the current iterate, average, and follow the exp
/// map along the averaged tangent until its norm drops below tolerance.
///
/// Convergence is guaranteed when all points lie within a geodesic ball of
/// radius pi/2; the iteration is still attempted outside that regime and
/// reports `converged: false` if the budget runs out. Bitwise-identical
/// inputs return the shared point bit-for-bit.
pub fn karcher_mean(points: &[UnitVector], config: &KarcherConfig) -> Result<KarcherMean> {
    config.validate()?;
    let Some(first) = points.first() else {
        return Err(Error::EmptyInput {
            what: "karcher_mean points",
        });
    };
    let dim = first.dim();
    for p in points {
        check_dims(dim, p.dim())?;
    }
    if points.iter().all(|p| p.as_vector() == first.as_vector()) {
        return Ok(KarcherMean {
            mean: first.clone(),
            iterations: 0,
            converged: true,
            final_tangent_norm: 0.0,
        });
    }

    let order = canonical_order(points);
    let inv_n = 1.0 / points.len() as f64;

    let mut sum = DVector::zeros(dim);
    for &i in &order {
        sum += points[i].as_vector();
    }
    if sum.norm() * inv_n < 1e-8 {
        return Err(Error::KarcherDegenerate {
            iteration: 0,
            message: "arithmetic mean of the inputs is numerically zero".into(),
        });
    }
    let mut mean = UnitVector::normalized(sum)?;

    let mut tangent_norm = f64::INFINITY;
    for iteration in 0..config.max_iterations {
        let mut tangent = DVector::zeros(dim);
        for &i in &order {
            let t = log_map(&mean, &points[i]).map_err(|e| Error::KarcherDegenerate {
                iteration,
                message: format!("point {i}: {e}"),
            })?;
            tangent += t;
        }
        tangent *= inv_n;
        tangent_norm = tangent.norm();
        if tangent_norm < config.tolerance {
            return Ok(KarcherMean {
                mean,
                iterations: iteration,
                converged: true,
                final_tangent_norm: tangent_norm,
            });
        }
        // The averaged tangent is orthogonal to the iterate up to rounding;
        // scrub the residual component so exp_map's precondition holds even
        // after many accumulations.
        let drift = tangent.dot(mean.as_vector());
        if drift.abs() > 0.0 {
            tangent -= mean.as_vector() * drift;
        }
        mean = exp_map(&mean, &tangent).map_err(|e| Error::KarcherDegenerate {
            iteration,
            message: e.to_string(),
        })?;
    }

    Ok(KarcherMean {
        mean,
        iterations: config.max_iterations,
        converged: false,
        final_tangent_norm: tangent_norm,
    })
}
