//! Minimal reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! Values live on a [`Tape`]; every primitive records its inputs so that
//! [`Tape::backward`] can apply the chain rule in reverse order. Trainable
//! arrays live in a [`ParamStore`] and are copied onto a tape per forward pass.

mod array;
pub mod checkpoint;
pub mod gradcheck;
mod mlp;
mod optim;
mod params;
mod tape;

pub use array::DenseArray;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Dtype, CHECKPOINT_MAGIC};
pub use mlp::{Activation, Mlp};
pub use optim::{adam_step, Adam, AdamConfig};
pub use params::{xavier_uniform, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

/// Pre-exponential clamp for sigmoid and the floor (as `exp(-LOG_CLAMP)`) for log.
pub const LOG_CLAMP: f64 = 36.7;
/// Largest argument passed to `exp` before clamping.
pub const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("index {index} out of range for {rows} rows in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        rows: usize,
    },
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DiffError>;

pub(crate) fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> DiffError {
    DiffError::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}
