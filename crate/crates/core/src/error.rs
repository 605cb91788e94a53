use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A factorization or solve failed; `condition` carries an estimate of
    /// λ_max / λ_min when one could be computed.
    #[error("numerical failure: {message}{}", condition.map(|c| format!(" (condition estimate {c:.3e})")).unwrap_or_default())]
    Numerical {
        message: String,
        condition: Option<f64>,
    },

    #[error(
        "Langevin chain diverged at round {round}, inner step {inner} (step size {step_size:.3e}{}); reduce eta0 or increase lambda",
        lambda_max.map(|l| format!(", loss Hessian lambda_max estimate {l:.3e}, stable step < {:.3e}", 2.0 / l)).unwrap_or_default()
    )]
    Divergence {
        round: usize,
        inner: usize,
        step_size: f64,
        lambda_max: Option<f64>,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("optimization failed: {0}")]
    OptimizationFailure(String),

    #[error("{}:{row}: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("dataset exhausted after {0} instances")]
    EndOfData(usize),

    #[error("seed {seed}, round {round}: {source}")]
    AtRound {
        seed: u64,
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
