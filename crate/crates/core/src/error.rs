use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped so the CLI can map them onto exit codes: configuration
/// problems (bad input documents, violated preconditions) versus numerical
/// failures (non-transient routing matrices, unstable models, solver caps).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("routing matrix is not transient (spectral radius estimate {spectral_radius:.12})")]
    NotTransient { spectral_radius: f64 },

    #[error("projected system of size {k} is not stable: b[{index}] = {value:e}")]
    Unstable { k: usize, index: usize, value: f64 },

    #[error("complementarity solver did not converge after {iterations} iterations (last update {last_update:e})")]
    LcpNoConvergence { iterations: usize, last_update: f64 },

    #[error("complementarity iterates lost monotonicity at coordinate {coord}")]
    LcpNonMonotone { coord: usize },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotTransient { .. }
                | Error::Unstable { .. }
                | Error::LcpNoConvergence { .. }
                | Error::LcpNonMonotone { .. }
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
