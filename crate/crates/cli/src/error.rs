use std::path::PathBuf;

use ising_lyap::LyapError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Lyap(#[from] LyapError),

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Lyap(e) if e.is_validation() => 2,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_separate_bad_input_from_numerical_failure() {
        assert_eq!(CliError::Validation("k: required".into()).exit_code(), 2);
        assert_eq!(CliError::Lyap(LyapError::EpsilonOutOfRange(2.0)).exit_code(), 2);
        assert_eq!(CliError::Lyap(LyapError::NoConvergence { iterations: 10, residual: 1.0 }).exit_code(), 1);
        let io = std::io::Error::new(std::io::ErrorKind::PermissionDenied, "denied");
        assert_eq!(CliError::Write { path: "x".into(), source: io }.exit_code(), 1);
    }
}
