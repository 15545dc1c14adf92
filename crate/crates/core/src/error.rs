use thiserror::Error;

/// Errors raised by the battery simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid local dimension {0} (supported: 2..=16)")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("matrix is not positive semi-definite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("temperature must be positive (got {0})")]
    InvalidTemperature(f64),

    #[error("local Gibbs states have incompatible spectra (max deviation {0:.3e})")]
    IncompatibleMarginals(f64),

    #[error("{name} = {value} is out of range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("energy labels diverge at zero detector efficiency")]
    DivergentLabels,

    #[error("state is not pure (purity {0})")]
    NotPure(f64),

    #[error("pure-state bound needs equal local field strengths (h_A^2 = {h_a2}, h_B^2 = {h_b2})")]
    AsymmetricFields { h_a2: f64, h_b2: f64 },

    #[error("coincidence bound undefined for vanishing local field h^2 = {0}")]
    UndefinedBound(f64),

    #[error("need at least 2 samples (got {0})")]
    TooFewSamples(usize),

    #[error("invalid config at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("matrix JSON: {0}")]
    MatrixFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
