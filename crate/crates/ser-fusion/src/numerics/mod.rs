//! Minimal tensor engine with reverse-mode differentiation.
//!
//! Values are plain row-major buffers ([`Tensor`]); differentiable
//! computations are recorded on a [`Tape`] whose nodes are created in
//! topological order, so a single reverse sweep produces exact gradients
//! for every reachable leaf. The engine is generic over the scalar type:
//! training runs in `f32` (checkpoints store a little-endian `f32` blob),
//! while gradient-check tests instantiate the same graphs in `f64` for
//! finite-difference headroom.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod kernels;
mod params;
mod real;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParamRecord};
pub use params::{ParamId, ParamStore};
pub use real::Real;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
