use thiserror::Error;

/// Errors raised by the geometry engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error at {point:?}: {reason}")]
    Geometry { point: Vec<f64>, reason: String },

    #[error("chart exit: point {point:?} is outside the chart domain")]
    ChartExit { point: Vec<f64> },

    #[error("non-finite value {value} at node {node}")]
    Numerical { node: usize, value: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("grid mode error: {0}")]
    Mode(String),

    #[error("perturbation failed: {0}")]
    Perturbation(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
