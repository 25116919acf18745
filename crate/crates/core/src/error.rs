use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at step {step}: {detail}")]
    Numeric { step: usize, detail: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    TrainingFailure { epoch: usize, loss: f64 },

    #[error("quadrature self-check failed: {0}")]
    Accuracy(String),

    #[error("spearman correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("schedule mismatch: checkpoint trained on {expected}, requested {found}")]
    ScheduleMismatch { expected: String, found: String },

    #[error("estimating pair ({a}, {b}): {source}")]
    Pair {
        a: String,
        b: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Attach the denoising step to an error that came out of a model evaluation.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::Numeric { .. } => self,
            other => Error::Numeric {
                step,
                detail: other.to_string(),
            },
        }
    }
}
