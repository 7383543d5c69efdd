use thiserror::Error;

/// Errors raised by the library. Failed verification checks are not errors;
/// they are reported through verdicts.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice extent: {0}")]
    InvalidExtent(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not symmetric (entry ({row}, {col}) differs from its transpose)")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:e} below -{threshold:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, threshold: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("test function has support at negative time (site {site})")]
    NotPositiveSupport { site: usize },

    #[error("site index {site} out of range for {site_count} sites")]
    SiteOutOfRange { site: usize, site_count: usize },

    #[error("invalid site coordinate {0:?}")]
    InvalidSite(Vec<i64>),

    #[error("ill-conditioned weights: exp(F) overflowed (max F = {max_log_weight:e})")]
    IllConditionedWeights { max_log_weight: f64 },

    #[error("factorization does not exist: {0}")]
    NoFactorization(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
