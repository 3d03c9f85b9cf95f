use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("drift nu = E[X] must be positive, got {0}")]
    NonPositiveDrift(f64),
    #[error("covariance matrix {which} is not positive definite (smallest/largest eigenvalue ratio {ratio:e})")]
    SingularSigma { which: &'static str, ratio: f64 },
    #[error("model kind `{0}` has no closed-form moments; use sample_moments")]
    NoClosedForm(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid count: {0}")]
    InvalidCount(String),
    #[error("{failures} of {attempted} walks did not cross the boundary within {max_steps} steps")]
    MaxStepsExceeded {
        failures: usize,
        attempted: usize,
        max_steps: usize,
    },
    #[error("path never exceeds its running maximum")]
    NoLadderEpoch,
    #[error("ladder moments are required for this evaluation")]
    MissingLadderMoments,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("expected dimension {expected}, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("smooth statistic fails its regularity conditions: {0}")]
    InvalidStatistic(String),
    #[error("scaled stopped sum lies outside the statistic's neighborhood")]
    OutOfNeighborhood,
    #[error("sample variance of the increments is zero")]
    DegenerateVariance,
    #[error("need at least two observations, got {0}")]
    TooFewObservations(usize),
    #[error("walk was run without retaining increments")]
    IncrementsNotRetained,
    #[error("estimated drift must be positive, got {0}")]
    NonPositiveNuHat(f64),
    #[error("moments and ladder moments come from different models")]
    ModelMismatch,
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("{rejected} of {reps} replications rejected (over the 1% limit)")]
    TooManyRejections { rejected: usize, reps: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the user's configuration rather than by a
    /// failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. }
                | Error::InvalidModel(_)
                | Error::InvalidCount(_)
                | Error::NonPositiveDrift(_)
                | Error::Json(_)
                | Error::WrongDimension { .. }
        )
    }
}
