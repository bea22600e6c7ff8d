use thiserror::Error;

/// Errors produced by the heat-trace library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error(
        "coefficients at k = {k:?} violate Hermitian symmetry (|v(-k) - conj v(k)| = {defect:.3e})"
    )]
    NonHermitian { k: Vec<i32>, defect: f64 },

    #[error("cutoff {cutoff} is below the potential band {band}; couplings would be truncated")]
    CutoffBelowBand { cutoff: u32, band: u32 },

    #[error("Galerkin dimension {dim} exceeds the configured limit {limit}")]
    DimensionLimit { dim: usize, limit: usize },

    #[error("ill-conditioned expansion fit: condition estimate {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("grid is not geometric: successive ratios range over [{min_ratio}, {max_ratio}]")]
    NonGeometricGrid { min_ratio: f64, max_ratio: f64 },

    #[error("quadratic form is not positive definite")]
    NotPositiveDefinite,

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
