//! Minimal dense multilayer perceptrons on flat `f64` parameter vectors.
//!
//! The whole crate deliberately avoids an autodiff framework: the networks
//! here are small enough that hand-written backprop is faster, easier to
//! verify with finite differences, and keeps every learned quantity a plain
//! `Vec<f64>` that serializes bit-exactly.
//!
//! Contents:
//! * [`MlpSpec`] / [`Mlp`] — architecture description and flat parameters
//!   with forward / reverse passes,
//! * [`AdamState`] — Adam with bias correction, one state per network,
//! * [`soft_update`] — Polyak averaging for target networks,
//! * [`checkpoint`] — length-prefixed binary serialization (JSON manifest
//!   line followed by little-endian `f64` payload) with bit-exact round
//!   trips.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{soft_update, AdamState};
pub use checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointEntry, CheckpointError, CHECKPOINT_FORMAT,
};
pub use mlp::{Activation, Mlp, MlpSpec, OutputActivation, Scratch};

use thiserror::Error;

/// Errors from network construction, evaluation, and optimization.
#[derive(Debug, Error)]
pub enum ApproxError {
    /// A spec was structurally invalid (fewer than two layers, zero width).
    #[error("invalid MLP spec: {0}")]
    InvalidSpec(String),
    /// An input, upstream gradient, or parameter vector had the wrong length.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A gradient passed to the optimizer contained NaN or infinity.
    #[error("non-finite gradient at component {index}")]
    NonFiniteGradient { index: usize },
}
