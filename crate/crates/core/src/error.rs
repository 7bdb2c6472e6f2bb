use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("amplitude vector has length {len}, expected {expected} for dims {dims:?}")]
    LengthMismatch {
        dims: Vec<usize>,
        len: usize,
        expected: usize,
    },

    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimsMismatch(Vec<usize>, Vec<usize>),

    #[error("non-finite amplitude at index {0}")]
    NonFinite(usize),

    #[error("dense object would hold {entries} complex entries, above the dense cap of {cap}")]
    DenseCapExceeded { entries: usize, cap: usize },

    #[error("partial trace needs a nonempty keep set")]
    EmptyKeep,

    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },

    #[error("not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("internal dimension must be at least 1")]
    ZeroDimension,

    #[error("inverse temperature must be finite-or-infinite and nonnegative, got {0}")]
    InvalidBeta(f64),

    #[error("invalid internal distribution: {0}")]
    InvalidDistribution(String),

    #[error("absorption map is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("internal index {index} out of range for M = {m}")]
    InternalIndexOutOfRange { index: usize, m: usize },

    #[error("detector array must be ordered LV, LH, RV, RH; found {found} at position {position}")]
    DetectorOrder { position: usize, found: String },

    #[error("invalid branch set: {0}")]
    InvalidBranchSet(String),

    #[error("pointer configuration {0} has no outcome at this station")]
    NoOutcome(String),

    #[error("invalid pointer configuration: {0}")]
    InvalidConfiguration(String),

    #[error("empty trial list")]
    EmptyTrials,

    #[error("trials mix measurement settings")]
    MixedSettings,

    #[error("need at least {min} trials per setting pair, got {got}")]
    InsufficientTrials { min: usize, got: usize },

    #[error("no-signaling audit needs at least two remote settings, got {0}")]
    SingleGroup(usize),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
