use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("band {band} is not isolated (gap margin {margin:.3e} at k = {k:.6})")]
    NotIsolated { band: usize, k: f64, margin: f64 },

    #[error("gauge error in band {band} at k = {k:.6}: {reason}")]
    Gauge { band: usize, k: f64, reason: String },

    #[error(
        "wrap contamination: boundary mass {mass:.3e} exceeds {tolerance:.1e}; increase grid.n_cells"
    )]
    WrapContamination { mass: f64, tolerance: f64 },

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("band bank incomplete: captured fraction {captured:.4} < {required}")]
    BankIncomplete { captured: f64, required: f64 },

    #[error("metric floor: {0}")]
    MetricFloor(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
