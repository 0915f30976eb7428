use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite sample at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A transfer function or pupil would wrap around the frequency grid.
    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("nonpositive intensity sum at row {row}, col {col}")]
    NonPositiveSum { row: usize, col: usize },

    #[error("broken antisymmetry: {0}")]
    Antisymmetry(String),

    /// A solver produced a non-finite iterate. `trace` holds the cost values
    /// recorded before the failure.
    #[error("solver diverged at iteration {iteration}")]
    Divergence { iteration: usize, trace: Vec<f64> },

    #[error("pupil learning failed: {0}")]
    Learning(String),

    #[error("npy: {0}")]
    Npy(String),

    #[error("png: {0}")]
    Png(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
