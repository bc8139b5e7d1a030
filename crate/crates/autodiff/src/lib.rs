//! Dense `f64` tensors with an eager reverse-mode graph.
//!
//! The primitive set is the one the hair networks need: 2D/3D convolution,
//! ReLU, elementwise arithmetic, reductions, channel concat/slice, reshape,
//! matrix product, and a fully connected scalar node. Backward rules are
//! built from the same primitives, so gradients can be differentiated again.

pub mod checkpoint;
pub mod conv;
mod error;
mod graph;
pub mod init;
pub mod numeric;
mod tensor;

pub use error::{AutodiffError, Result};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
