use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("mode {mode} outside the grid range |k| <= {max}")]
    ModeOutOfRange { mode: i64, max: usize },

    #[error("conflicting amplitudes for the conjugate pair at mode {0}")]
    ConjugateConflict(i64),

    #[error("mean mode must be real, got imaginary part {0}")]
    ImaginaryMean(f64),

    #[error("expected {expected} physical samples, got {got}")]
    SampleCount { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),

    #[error("invalid integrability exponent {0}")]
    InvalidExponent(f64),

    #[error("{0} requires mean-zero input")]
    NonzeroMean(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("trace of untruncated white noise is infinite; use the truncated trace")]
    UntruncatedWhiteNoise,

    #[error("operation requires model {expected}, got {got}")]
    WrongModel { expected: &'static str, got: &'static str },

    #[error("non-finite or exploding state at t = {time}")]
    BlowUp { time: f64 },

    #[error("Picard iteration did not converge in window {window} after {iterations} iterations (last distance {distance:e})")]
    PicardDiverged {
        window: usize,
        iterations: usize,
        distance: f64,
    },

    #[error("partition of {intervals} intervals is not aligned with a path of {steps} steps")]
    PartitionMisaligned { intervals: usize, steps: usize },

    #[error("sigma = {0} >= 2: bound undefined")]
    SigmaAboveThreshold(f64),

    #[error("alpha = {0} >= 1/2: increment sum diverges with the truncation level")]
    RegularityAboveThreshold(f64),

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
