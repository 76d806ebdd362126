use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("CFL violation: dt = {dt:e} exceeds stability limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("simulation blew up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("kernel of half-width {delta} wraps onto itself on a torus of length {length}")]
    KernelWraps { delta: f64, length: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("measurement centers are not a regular grid x_k = L k / M")]
    IrregularLayout,

    #[error("time stride {stride} exceeds the {available} recorded intervals")]
    StrideTooLarge { stride: usize, available: usize },

    #[error("plug-in interval undefined for negative estimate {0:e}")]
    NegativeEstimate(f64),

    #[error("{path}: empty file")]
    EmptyFile { path: PathBuf },

    #[error("{path}: row {row} has {found} columns, expected {expected}")]
    RaggedRow { path: PathBuf, row: usize, expected: usize, found: usize },

    #[error("{path}: row {row}, column {col}: cannot parse {value:?} as a number")]
    NonNumeric { path: PathBuf, row: usize, col: usize, value: String },

    #[error("{path}: row {row}, column {col}: non-finite value")]
    NonFiniteCell { path: PathBuf, row: usize, col: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    /// Failures caused by the numerics rather than the inputs. Data that
    /// carry no information (zero Fisher information) count as bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::BlowUp { .. } | Error::NonFinite(_) | Error::NegativeEstimate(_))
    }
}
