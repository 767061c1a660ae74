use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum AmuseError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("zero matrix has no polar factor")]
    ZeroMatrix,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("rank-deficient matrix: singular value {index} is {value:.3e} (largest {largest:.3e})")]
    RankDeficient {
        index: usize,
        value: f64,
        largest: f64,
    },

    #[error("NaN gradient in parameter {0}")]
    NanGradient(String),

    #[error("eigensolver did not converge: worst relative residual {worst_residual:.3e} after {iters} iterations")]
    NoConvergence { worst_residual: f64, iters: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("training aborted: non-finite loss at step {step}")]
    NanLoss { step: u64 },
}

pub type Result<T> = std::result::Result<T, AmuseError>;

impl AmuseError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        AmuseError::Io {
            context: context.into(),
            source,
        }
    }
}
