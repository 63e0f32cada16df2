use thiserror::Error;

/// Errors produced by the learner, the simulator and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("timestep {index} out of range for horizon {horizon}")]
    TimestepOutOfRange { index: usize, horizon: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A matrix that must be symmetric positive definite is not. For the
    /// backward pass this is the signal that η has to be raised.
    #[error("{what} is not positive definite at timestep {timestep}")]
    NotPositiveDefinite { what: &'static str, timestep: usize },

    #[error("{what} is not symmetric at timestep {timestep}")]
    NotSymmetric { what: &'static str, timestep: usize },

    #[error("environment step failed at timestep {timestep}: {reason}")]
    Step { timestep: usize, reason: String },

    #[error("rollout {rollout} failed: {source}")]
    Rollout {
        rollout: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("regression at timestep {timestep} is singular")]
    SingularFit { timestep: usize },

    #[error("not enough samples at timestep {timestep}: {available} < {required}")]
    TooFewSamples {
        timestep: usize,
        available: usize,
        required: usize,
    },

    #[error("no η up to {limit:e} makes the update positive definite")]
    EtaLadderExhausted { limit: f64 },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
