//! Dense 2-D tensors with reverse-mode differentiation, Adam, and parameter files.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{ParamId, ParamSet};
pub use tape::{log_softmax_rows, sigmoid, softmax_rows, Gradients, Tape, Var};
pub use tensor::{matmul_values, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("buffer of length {len} cannot be shaped {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("column slice {start}..{} out of range for {cols} columns", start + len)]
    Slice { start: usize, len: usize, cols: usize },
    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("expected {expected} gradients, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
