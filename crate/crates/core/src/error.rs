use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("period must be positive")]
    ZeroPeriod,
    #[error("characteristic set must contain at least one element")]
    EmptySet,
    #[error("element {element} is outside Z_{period}")]
    ElementOutOfRange { element: u64, period: u64 },
    #[error("element {0} appears more than once")]
    DuplicateElement(u64),
    #[error("periods differ: {0} vs {1}")]
    PeriodMismatch(u64, u64),
    #[error("sequence set must have at least {required} members, got {got}")]
    TooFewMembers { required: usize, got: usize },
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("index {0} selected more than once")]
    DuplicateIndex(usize),
    #[error("moduli {0} and {1} are not coprime")]
    NotCoprime(u64, u64),
    #[error("residue {value} out of range for modulus {modulus}")]
    ResidueOutOfRange { value: u64, modulus: u64 },
    #[error("construction requires M >= 4, got {0}")]
    UserCountTooSmall(u64),
    #[error("operation requires weight >= {required}, got {got}")]
    WeightTooSmall { required: usize, got: usize },
    #[error("sequence {index} has weight {got}, expected {expected}")]
    WeightMismatch { index: usize, expected: usize, got: usize },
    #[error("shift {shift} does not attain the maximum cross-correlation of ({i}, {k})")]
    NotMaximizingShift { i: usize, k: usize, shift: u64 },
    #[error("residual requires two distinct users, got i = k = {0}")]
    SameUser(usize),
    #[error("search needs {needed} steps, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("invalid probability {name} = {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("M * p_a = {0} < 1, transmission probability would exceed 1")]
    InfeasibleTransmissionProbability(f64),
    #[error("every sample hit the horizon of {0} slots")]
    AllSamplesTruncated(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
