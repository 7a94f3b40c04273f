use thiserror::Error;

pub type Result<T, E = LoeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LoeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("item index {index} out of range for {n_items} items")]
    IndexOutOfRange { index: usize, n_items: usize },

    #[error("invalid triplet ({i}, {j}, {k}): indices must be pairwise distinct")]
    InvalidTriplet { i: usize, j: usize, k: usize },

    #[error("pair ({j}, {k}) is not a valid ordered pair over {n_items} items")]
    InvalidPair { j: usize, k: usize, n_items: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("triplet ({i}, {j}, {k}) was never recorded in the dataset")]
    NotRecorded { i: usize, j: usize, k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("classical MDS needs {needed} nonnegative eigenvalues, spectrum was {spectrum:?}")]
    InsufficientSpectrum { needed: usize, spectrum: Vec<f64> },

    #[error("landmark configuration is rank deficient (eigenvalues {eigenvalues:?})")]
    RankDeficient { eigenvalues: Vec<f64> },

    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
