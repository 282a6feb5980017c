use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("vector norm {norm} deviates from 1 by more than {tolerance}")]
    NotUnitNorm { norm: f64, tolerance: f64 },

    #[error("zero vector where a direction is required: {context}")]
    ZeroVector { context: &'static str },

    #[error("tangent vector is not orthogonal to the base point (dot product {dot:e})")]
    TangentNotOrthogonal { dot: f64 },

    #[error("points are antipodal within tolerance; the logarithmic map is undefined")]
    AntipodalPoints,

    #[error("Karcher mean degenerated at iteration {iteration}: {message}")]
    KarcherDegenerate { iteration: usize, message: String },

    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("labels are required for this operation")]
    MissingLabels,

    #[error("class {label} has a single member, so its reference set is empty")]
    SingletonClass { label: i32 },

    #[error("cross-covariance is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attaches a row index to an error raised while processing row-wise data.
    pub fn at_row(self, row: usize) -> Self {
        Error::AtRow {
            row,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics themselves (NaN, divergence,
    /// degeneracy), as opposed to invalid inputs or configuration. The CLI
    /// maps these to a distinct exit code.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric(_)
            | Error::KarcherDegenerate { .. }
            | Error::AntipodalPoints
            | Error::RankDeficient { .. } => true,
            Error::AtRow { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
