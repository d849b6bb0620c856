use thiserror::Error;

/// Errors raised by the library. Variants carry enough context to be
/// printed directly by the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NicError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityDomain(f64),
    #[error("parameter `{name}` = {value} outside {range}")]
    Range {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("box table is not a valid conditional distribution: {0}")]
    InvalidTable(String),
    #[error("box is signaling (max marginal deviation {0:.3e})")]
    Signaling(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("depth {0} exceeds the supported maximum of {max}", max = crate::score::MAX_DEPTH)]
    DepthOverflow(u32),
    #[error("no root: target capacity {target} not below the maximum score {max}")]
    NoRoot { target: f64, max: f64 },
    #[error("N = {0} exceeds the big-integer budget")]
    BinomialBudget(u64),
    #[error("empty contingency table for query {0}")]
    EmptyTable(usize),
    #[error("degenerate sample size T = {0}")]
    DegenerateSample(u64),
    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NicError>;
