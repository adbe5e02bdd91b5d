use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (wrong dimension, mismatched
    /// particle number, negative population, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("LAPACK {routine} failed with info = {info} (dimension {dim})")]
    Lapack {
        routine: &'static str,
        info: i32,
        dim: usize,
    },

    #[error("linear algebra backend: {0}")]
    Backend(String),

    #[error("{0} levels are too few to unfold (need at least {1}); use the spacing ratio instead")]
    TooFewLevels(usize, usize),

    #[error("no levels in the requested range: {0}")]
    EmptyRange(String),

    #[error("no uncoupled level at x = {requested}; available x values: {available}")]
    MissingBlock { requested: String, available: String },

    #[error("microcanonical window misses the spectrum (total weight {0:e})")]
    EmptyWindow(f64),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integration drift exceeds tolerance: {0}")]
    Drift(String),

    #[error("energy shell unreachable: {0}")]
    UnreachableShell(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
