//! Command-line front end for the swapbell simulator.
//!
//! The binary is a thin wrapper; everything it does is reachable from here
//! so the commands can be tested without spawning processes.

pub mod commands;
pub mod config;
pub mod table;

use thiserror::Error;

/// Exit code for configuration, input and usage errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numerical failures and failed checks.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(swapbell::Error),

    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) | CliError::CheckFailed(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<swapbell::Error> for CliError {
    fn from(e: swapbell::Error) -> Self {
        match e {
            swapbell::Error::InvalidArgument(msg) => CliError::Config(msg),
            other => CliError::Numerical(other),
        }
    }
}

/// Fiber length in km with transmission `eta` at `loss_db_per_km`.
pub fn transmission_to_km(eta: f64, loss_db_per_km: f64) -> Result<f64, CliError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(CliError::Config(format!("transmission must lie in (0, 1], got {eta}")));
    }
    if !(loss_db_per_km > 0.0 && loss_db_per_km.is_finite()) {
        return Err(CliError::Config(format!("loss must be positive, got {loss_db_per_km} dB/km")));
    }
    Ok(10.0 * eta.recip().log10() / loss_db_per_km)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fiber_length() {
        assert!((transmission_to_km(0.1, 0.3).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert!((transmission_to_km(0.01, 0.3).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(transmission_to_km(1.0, 0.3).unwrap(), 0.0);
        assert!(transmission_to_km(0.0, 0.3).is_err());
        assert!(transmission_to_km(-0.5, 0.3).is_err());
        assert!(transmission_to_km(1.5, 0.3).is_err());
    }

    #[test]
    fn error_codes() {
        let e: CliError = swapbell::Error::InvalidArgument("x".into()).into();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        let e: CliError = swapbell::Error::HeraldImpossible { p_success: 0.0 }.into();
        assert_eq!(e.exit_code(), EXIT_NUMERICAL);
    }
}
