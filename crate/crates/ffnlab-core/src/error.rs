//! Error type shared by the core modules.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Tensor shapes do not line up for the requested operation.
    Shape { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    /// An index (token id, layer index, ...) is out of range.
    Index { what: &'static str, index: usize, bound: usize },
    /// A caller violated an operation's precondition.
    Contract(String),
    /// A configuration failed validation.
    Config(String),
    /// A serialized artifact is malformed or damaged.
    Format(String),
    /// Stored checksum does not match the payload.
    Checksum { expected: String, actual: String },
    /// Training aborted on a non-finite loss; carries per-layer gradient norms.
    NonFiniteLoss { step: u64, layer_grad_norms: Vec<(String, f64)> },
    /// Analysis input is missing (config, task) cells.
    MissingCells(Vec<(String, String)>),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            CoreError::Index { what, index, bound } => {
                write!(f, "{what} index {index} out of range (< {bound} required)")
            }
            CoreError::Contract(msg) => write!(f, "contract violation: {msg}"),
            CoreError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CoreError::Format(msg) => write!(f, "malformed artifact: {msg}"),
            CoreError::Checksum { expected, actual } => {
                write!(f, "checksum mismatch: stored {expected}, computed {actual}")
            }
            CoreError::NonFiniteLoss { step, layer_grad_norms } => {
                write!(f, "non-finite loss at step {step}; gradient norms:")?;
                for (name, norm) in layer_grad_norms {
                    write!(f, " {name}={norm:.3e}")?;
                }
                Ok(())
            }
            CoreError::MissingCells(cells) => {
                write!(f, "missing (config, task) cells:")?;
                for (config, task) in cells {
                    write!(f, " ({config}, {task})")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
