use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix (condition number {condition:.3e})")]
    SingularMatrix { condition: f64 },

    #[error("heralding event has non-positive probability {p_success:.3e}")]
    HeraldImpossible { p_success: f64 },

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("linear program solver failure: {0}")]
    SolverFailure(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("Fock truncation bound {bound:.3e} exceeds requested tolerance {tolerance:.3e}")]
    Precision { bound: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
