use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpdeError>;

#[derive(Debug, Error)]
pub enum SpdeError {
    #[error("grid size {0} must be a power of two and at least 4")]
    InvalidGrid(usize),

    #[error("grid mismatch: expected {expected} modes, got {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("Sobolev index {0} is not one of 0, 1, 2")]
    InvalidSobolevIndex(u32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("increments do not form a contiguous dyadic block: {0}")]
    NonContiguous(String),

    #[error("step sizes are not dyadic multiples of the reference step: {0}")]
    NonDyadic(String),

    #[error("convolution produced imaginary residue {residue:e} (scale {scale:e}); normalization convention is broken")]
    ConventionBug { residue: f64, scale: f64 },

    #[error("trajectory diverged at step {step}")]
    Diverged { step: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("all samples diverged")]
    AllDiverged,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SpdeError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        SpdeError::InvalidParameter(msg.into())
    }
}
