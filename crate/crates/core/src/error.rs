use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error("no PMF profiled for layer {layer}, x_bit {x_bit}, w_bit {w_bit}, n_wl {n_wl}")]
    MissingPmf {
        layer: usize,
        x_bit: usize,
        w_bit: usize,
        n_wl: usize,
    },

    #[error("threshold {threshold} is infeasible; minimum achievable error is {min_error}")]
    Infeasible { threshold: f64, min_error: f64 },

    #[error("instance too large for exhaustive search ({combinations} combinations)")]
    TooLarge { combinations: f64 },

    #[error("insufficient arrays: need {needed}, chip has {available}")]
    InsufficientArrays { needed: usize, available: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag used in the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Format(_) => "format",
            Error::MissingPmf { .. } => "missing_pmf",
            Error::Infeasible { .. } => "infeasible",
            Error::TooLarge { .. } => "too_large",
            Error::InsufficientArrays { .. } => "insufficient_arrays",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
