use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("field parameter must be a positive integer, got {0}")]
    InvalidField(u64),

    #[error("mismatched field parameters: m = {left} vs m = {right}")]
    FieldMismatch { left: u64, right: u64 },

    #[error("division by zero")]
    DivisionByZero,

    #[error("{what} is outside its domain: {value}")]
    OutOfDomain { what: &'static str, value: String },

    #[error("digit {digit} is below the digit floor m = {m}")]
    DigitBelowFloor { digit: u64, m: u64 },

    #[error("digit does not fit in 64 bits")]
    DigitOverflow,

    #[error("requested {requested} convergents but only {available} digits are available")]
    InsufficientDigits { requested: usize, available: usize },

    #[error("expansion terminated after {produced} digits, {requested} requested")]
    EarlyTermination { produced: usize, requested: usize },

    #[error("rejection sampler exceeded {0} proposals")]
    RejectionExhausted(u32),

    #[error("enumeration of {words} words exceeds the budget of {budget}")]
    BudgetExceeded { words: u128, budget: u128 },

    #[error("degenerate event: {0}")]
    DegenerateEvent(String),

    #[error("could not certify {0}")]
    CertificationFailed(String),

    #[error("invariant violated: {0}")]
    InvariantViolated(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: impl ToString) -> Self {
        Error::OutOfDomain {
            what,
            value: value.to_string(),
        }
    }
}
