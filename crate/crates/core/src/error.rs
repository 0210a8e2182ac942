use thiserror::Error;

use crate::free_group::Word;

/// Errors raised by the constructions and their verification harness.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A pairing scan ran past its budget without finding a partner.
    #[error("scan budget of {budget} steps exhausted at {site:?} scanning {direction}")]
    ScanBudgetExceeded {
        site: Word,
        direction: &'static str,
        budget: u64,
    },

    /// A traversal needed a unique labeled edge that is missing or not unique.
    #[error("actionability violation at vertex {vertex}, letter {letter}")]
    ActionabilityViolation { vertex: String, letter: String },

    /// Input lies outside the domain where the construction is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller supplied inconsistent arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// A configured resource cap was exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A witness search found nothing within its cap.
    #[error("no witness found within cap {cap}")]
    SearchFailure { cap: usize },
}

impl Error {
    /// True for aborted trials that the statistical harness excludes and counts.
    pub fn is_abort(&self) -> bool {
        matches!(self, Error::ScanBudgetExceeded { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
