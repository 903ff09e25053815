use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no data")]
    NoData,

    #[error("symbol {symbol} at position {position} is outside the alphabet [0, {alphabet})")]
    SymbolOutOfRange {
        position: usize,
        symbol: usize,
        alphabet: usize,
    },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("noise level out of range: e = {0} (must lie in [0, 0.25])")]
    NoiseOutOfRange(f64),

    #[error("insufficient data: need more than {needed} samples, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("insufficient history at index {index}: need at least {needed} past samples")]
    InsufficientHistory { index: usize, needed: usize },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { path: PathBuf, timestamp: String },

    #[error("{path}: line {line}: non-finite value")]
    NonFinite { path: PathBuf, line: u64 },

    #[error("{path}: column `{column}` not found")]
    MissingColumn { path: PathBuf, column: String },

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("aligned series have no common timestamps")]
    EmptyIntersection,

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("LMS diverged")]
    LmsDiverged,

    #[error("delta too large: maximum feasible delta is {max_delta}")]
    DeltaTooLarge { max_delta: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("inconsistent channel/source: recovered input has entry {value} at symbol {symbol}")]
    InconsistentSource { symbol: usize, value: f64 },

    #[error("unbalanced classes: {0}")]
    UnbalancedClasses(String),

    #[error("unknown symbol {symbol} (score table covers {alphabet} symbols)")]
    UnknownSymbol { symbol: usize, alphabet: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the caller's files or arguments rather
    /// than by the computation itself.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::DuplicateTimestamp { .. }
                | Error::NonFinite { .. }
                | Error::MissingColumn { .. }
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
