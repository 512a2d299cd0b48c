//! Small dense networks: fully connected layers, ELU, tanh, layer norm,
//! reverse-mode gradients over a recorded tape, Adam, and a binary
//! checkpoint container.
//!
//! Everything is generic over [`Scalar`] so tests can run in `f64` while
//! training uses `f32`. Batches are row-major matrices with one sample per row.

pub mod adam;
pub mod checkpoint;
pub mod mat;
pub mod mlp;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointError};
pub use mat::{Mat, Scalar};
pub use mlp::{LayerKind, Mlp, Tape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("tape was recorded with parameter version {tape}, network is at version {net}")]
    StaleTape { tape: u64, net: u64 },
    #[error("non-finite gradient, update skipped")]
    NonFiniteGradient,
    #[error("invalid layer stack: {0}")]
    Architecture(String),
}
