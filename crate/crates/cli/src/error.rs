use std::fmt;

use conc_lab::Error;

/// Failure of a run, carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input data (exit 2).
    Config(String),
    /// Numerical or certification failure (exit 3).
    Numerical(String),
    /// An iterative solver did not converge (exit 4).
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::NonConvergence(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Numerical(m) => write!(f, "numerical error: {m}"),
            Self::NonConvergence(m) => write!(f, "non-convergence: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidInput(_) | Error::Mismatch(_) | Error::Io(_) | Error::Json(_) => Self::Config(msg),
            Error::DiffusionBound { .. } | Error::Certification(_) => Self::Numerical(msg),
            Error::NonConvergence { .. } => Self::NonConvergence(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Config(e.to_string())
    }
}
