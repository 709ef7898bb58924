use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },

    #[error("power iteration did not converge within {max_iter} iterations (last estimate {last})")]
    Convergence { max_iter: usize, last: f64 },

    #[error("training diverged: non-finite loss at step {step}")]
    Divergence { step: usize },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("IDX format error at offset {offset}: {message}")]
    IdxFormat { offset: u64, message: String },

    #[error("exact-condition construction failed: {0}; retry with a different seed")]
    Construction(String),

    #[error("permutation is not a bijection: {0}")]
    Bijection(String),
}

pub type Result<T> = std::result::Result<T, Error>;
