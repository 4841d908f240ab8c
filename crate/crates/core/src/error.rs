use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("window ending at {end_index} is out of range (T = {length}, t = {samples})")]
    WindowOutOfRange {
        end_index: usize,
        length: usize,
        samples: usize,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("row {0} is constant; enable jitter to standardize it")]
    DegenerateRow(usize),
    #[error("factor count {p} is invalid for a {n}x{t} window")]
    InvalidFactorCount { p: usize, n: usize, t: usize },
    #[error("at least two bins are required, got {0}")]
    EmptyBins(usize),
    #[error("bin edges must be finite and strictly increasing")]
    InvalidEdges,
    #[error("polynomial root refinement failed (residual {residual:e})")]
    SolverFailure { residual: f64 },
    #[error("no root gives a nonnegative density at lambda = {lambda}")]
    NoPhysicalRoot { lambda: f64 },
    #[error("grid captures only {mass:.4} of the spectral mass")]
    SupportNotCovered { mass: f64 },
    #[error("argument {z_re} + {z_im}i lies on a square-root branch cut")]
    BranchCut { z_re: f64, z_im: f64 },
    #[error("densities are defined on different bin edges")]
    BinMismatch,
    #[error("every (p, b) pair failed for window ending at {end_index}")]
    GridExhausted { end_index: usize },
    #[error("timelines do not share the same end indices")]
    IndexMismatch,
    #[error("AR(1) coefficient {0} must satisfy |b| < 1")]
    InvalidCoefficient(f64),
    #[error("event on channel {channel} ({onset}..{offset:?}) falls outside {n} channels x {t} samples")]
    ScheduleOutOfRange {
        channel: usize,
        onset: usize,
        offset: Option<usize>,
        n: usize,
        t: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
