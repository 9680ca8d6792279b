//! Error type shared by the core modules.

use alloc::string::String;
use core::fmt;

/// Errors raised by tape evaluation, network construction, and the loss
/// machinery. Numerical failures carry enough context to locate the sample
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A node id that is not on the tape (or not a scalar output).
    InvalidNode { node: usize, len: usize },
    /// Mismatched vector/matrix dimensions.
    DimensionMismatch { expected: usize, got: usize, what: &'static str },
    /// A matrix that must be symmetric positive definite is not.
    NotPositiveDefinite(&'static str),
    /// An evaluation produced a non-finite value.
    NonFinite { what: &'static str, detail: String },
    /// A batch operation received no samples.
    EmptyBatch(&'static str),
    /// A closed-form expression was evaluated outside its domain
    /// (e.g. the LQR gain at rho = 0).
    OutOfDomain(String),
    /// Invalid configuration value.
    InvalidConfig(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidNode { node, len } => {
                write!(f, "node {node} is not a scalar output on this tape (len {len})")
            }
            CoreError::DimensionMismatch { expected, got, what } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, got {got}")
            }
            CoreError::NotPositiveDefinite(what) => {
                write!(f, "{what} must be symmetric positive definite")
            }
            CoreError::NonFinite { what, detail } => {
                write!(f, "non-finite value in {what}: {detail}")
            }
            CoreError::EmptyBatch(what) => write!(f, "empty sample batch passed to {what}"),
            CoreError::OutOfDomain(msg) => write!(f, "out of domain: {msg}"),
            CoreError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
