use std::fmt;
use std::io;

use fermibgk_core::Error as CoreError;

/// Process exit status for each failure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Config = 2,
    Admissibility = 3,
    CheckFailed = 4,
    Io = 5,
    Numerical = 6,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("admissibility violated: {0}")]
    Admissibility(String),
    #[error("verification failed: {0}")]
    CheckFailed(String),
    #[error("i/o error: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl AppError {
    pub fn status(&self) -> ExitStatus {
        match self {
            AppError::Config(_) => ExitStatus::Config,
            AppError::Admissibility(_) => ExitStatus::Admissibility,
            AppError::CheckFailed(_) => ExitStatus::CheckFailed,
            AppError::Io { .. } => ExitStatus::Io,
            AppError::Numerical(_) => ExitStatus::Numerical,
        }
    }

    pub fn io(context: impl fmt::Display, source: io::Error) -> Self {
        AppError::Io {
            context: context.to_string(),
            source,
        }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidTau(_)
            | CoreError::InvalidGrid(_)
            | CoreError::InvalidConfig(_)
            | CoreError::GridInadequate { .. }
            | CoreError::BoundViolation { .. }
            | CoreError::ShapeMismatch { .. }
            | CoreError::UnsupportedOrder(_) => AppError::Config(msg),
            CoreError::OutOfBranch { .. }
            | CoreError::Inadmissible { .. }
            | CoreError::Positivity { .. }
            | CoreError::DegenerateMoments { .. } => AppError::Admissibility(msg),
            _ => AppError::Numerical(msg),
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_documented_codes() {
        let adm = AppError::from(CoreError::Inadmissible {
            cell: 3,
            b: 2.0,
            beta_max: 1.6,
        });
        assert_eq!(adm.status().code(), 3);
        assert!(adm.to_string().contains("cell 3"));
        assert_eq!(AppError::from(CoreError::InvalidTau("x")).status().code(), 2);
        let conv = CoreError::Convergence {
            what: "w",
            iterations: 1,
            residual: 1.0,
        };
        assert_eq!(AppError::from(conv).status().code(), 6);
        assert_eq!(ExitStatus::Ok.code(), 0);
    }
}
