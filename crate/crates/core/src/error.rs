use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("empty grid or zero antennas")]
    EmptyGrid,
    #[error("position ({n}, {m}) outside a {rows}x{cols} grid")]
    OutOfRange { n: usize, m: usize, rows: usize, cols: usize },
    #[error("negative noise variance {0}")]
    NegativeVariance(f64),
    #[error("pilot density {0} outside [0, 1]")]
    InvalidDensity(f64),
    #[error("infeasible geometry: sub-block length {subblock_len} must exceed antenna count {antennas}")]
    InfeasibleGeometry { subblock_len: usize, antennas: usize },
    #[error("{required} model symbols exceed the round capacity of {available}")]
    CapacityExceeded { required: usize, available: usize },
    #[error("pilot-embedding matrix has a zero diagonal entry")]
    SingularEmbedding,
    #[error("power constraint violated: used {used}, budget {budget}")]
    PowerConstraintViolated { used: f64, budget: f64 },
    #[error("estimator undefined: pilot power and noise variance are both zero")]
    UndefinedEstimator,
    #[error("effective gain below the decode floor")]
    DecodeSingular,
    #[error("closed-form split gives non-positive pilot power {rho_p}")]
    NegativePilotPower { rho_p: f64 },
    #[error("requested {requested} dynamic devices but only {available} candidates")]
    TooManyDynamics { requested: usize, available: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model history holds {available} rounds but staleness needs {needed}")]
    HistoryTooShort { needed: usize, available: usize },
    #[error("drift telescoping identity broken at coordinate {coord} (gap {gap})")]
    TelescopingMismatch { coord: usize, gap: f64 },
    #[error("uplink scaling beta must be positive")]
    ZeroScaling,
    #[error("device {0} has an empty data shard")]
    EmptyShard(usize),
    #[error("no payload slots in the round")]
    NoPayload,
    #[error("step size {eta} exceeds 1/(4L) = {limit}")]
    StepSizeTooLarge { eta: f64, limit: f64 },
    #[error("need at least {min} Monte-Carlo trials, got {n}")]
    TooFewTrials { n: usize, min: usize },
    #[error("at least one scheduled dynamic device is required")]
    NoDynamicDevices,
    #[error("no optimum is known for this task")]
    NoOptimum,
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
