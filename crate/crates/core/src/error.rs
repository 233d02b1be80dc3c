use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the data model, the tests and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("functions live on different grids")]
    GridMismatch,

    #[error("non-finite value {value} at grid index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("sample too small: need at least {needed} curves, got {got}")]
    UndersizedSample { needed: usize, got: usize },

    #[error("invalid equivalence band: {0}")]
    InvalidBand(String),

    #[error("both extremal sets are empty")]
    EmptyExtremalSets,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate variance at grid index {index}")]
    DegenerateVariance { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("simulation run {run} failed: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
