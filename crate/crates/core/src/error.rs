use thiserror::Error;

pub type Result<T, E = CateError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CateError {
    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("correlation matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    InvalidCorrelation { min_eigenvalue: f64 },

    #[error("propensity index has zero spread; cannot standardize")]
    DegeneratePropensity,

    #[error("probability {value} outside the open interval (0, 1)")]
    InvalidProbability { value: f64 },

    #[error("degenerate fold: {0}")]
    DegenerateFold(String),

    #[error("degenerate treatment group: {0}")]
    DegenerateGroup(&'static str),

    #[error("nuisance `{nuisance}` was trained on {overlap} rows of its estimation fold")]
    Leakage { nuisance: String, overlap: usize },

    #[error("{0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(CateError::DimensionMismatch { expected, found })
    }
}
