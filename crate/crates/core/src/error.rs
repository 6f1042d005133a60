use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityDomain(f64),
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("action {action} on page {page} is out of range (page has {count} candidates)")]
    ActionOutOfRange { page: usize, action: usize, count: usize },
    #[error("action {action} on page {page} is incompatible with previous action {prev}")]
    InfeasibleAction { page: usize, prev: usize, action: usize },
    #[error("page {page} has no feasible action after previous action {prev}")]
    EmptyFeasibleSet { page: usize, prev: usize },
    #[error("invalid model form: {0}")]
    InvalidForm(String),
    #[error("{combinations} trajectories exceed the enumeration limit of {limit}")]
    EnumerationLimit { combinations: u128, limit: u128 },
    #[error("malformed outcome: {0}")]
    MalformedOutcome(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
