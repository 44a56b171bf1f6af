use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("value {value} outside the kernel domain [0, 1]")]
    OutOfDomain { value: f64 },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length scale must be resolved before evaluation (got \"median\")")]
    UnresolvedLengthScale,

    #[error("treatment arm {arm} is empty")]
    EmptyArm { arm: u8 },

    #[error("empty training mask")]
    EmptyMask,

    #[error("linear system is singular after {attempts} jitter escalations")]
    SingularSystem { attempts: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("eigen-decomposition failed")]
    Eigen,

    #[error("all {0} candidates failed to train")]
    NoCandidateSurvived(usize),

    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{failed} of {total} replications failed (limit is 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Whether the error comes from rejected input rather than a failure
    /// during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Csv { .. }
                | Error::Config(_)
                | Error::UnresolvedLengthScale
                | Error::OutOfDomain { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}
