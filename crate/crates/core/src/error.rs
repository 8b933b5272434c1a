use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("x = {x} lies outside the domain [0, {length}]")]
    OutOfDomain { x: f64, length: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("alpha = {0} is outside the documented range (-1, 1/2]")]
    AlphaOutOfRange(f64),

    #[error("singular matrix: zero pivot at row {row}")]
    SingularPivot { row: usize },

    #[error("solver state is {0}; no further steps accepted")]
    NotRunning(String),

    #[error("no phase-condition root within {width} of the previous shift {previous}")]
    NoRootInBracket { previous: f64, width: f64 },

    #[error("level set missing at t = {t}")]
    MissingPosition { t: f64 },

    #[error("not enough samples after t0 = {t0} ({found} found, need {needed})")]
    NotEnoughSamples { t0: f64, found: usize, needed: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("all {realizations} realizations failed (blown up: {blown_up}, extinct: {extinct})")]
    AllRealizationsFailed {
        realizations: usize,
        blown_up: usize,
        extinct: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
