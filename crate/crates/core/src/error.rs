use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("value {value} at position {position} is outside [-{bound}, {bound}]")]
    ValueOutOfRange {
        position: usize,
        value: i128,
        bound: i128,
    },

    #[error("index {index} is outside [0, {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("duplicate index {0} in representation")]
    DuplicateIndex(usize),

    #[error("index {0} is not a member of the index set")]
    NotInSet(usize),

    #[error("vector length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("sketch too small: need {needed_rows} rows per repetition and {needed_reps} repetitions, have {rows} and {reps}")]
    SketchTooSmall {
        needed_rows: usize,
        needed_reps: usize,
        rows: usize,
        reps: usize,
    },

    #[error("negative squared norm {0}")]
    NegativeNorm(i128),

    #[error("unsupported in this mode: {0}")]
    Unsupported(String),

    #[error("inconsistent leakage profile: {0}")]
    InconsistentProfile(String),

    #[error("trial count must be positive")]
    ZeroTrials,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
