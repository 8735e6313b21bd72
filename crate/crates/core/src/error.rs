use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("enumeration budget exceeded: {required} configurations, limit {limit}")]
    Budget { required: u128, limit: u128 },

    #[error("syndrome {syndrome} has zero probability under the current rates")]
    ZeroSupport { syndrome: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("inconsistent moments: {0}")]
    InconsistentMoments(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroSupport { .. }
                | Error::IllConditioned(_)
                | Error::InconsistentMoments(_)
                | Error::Internal(_)
        )
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}
