//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Values are plain [`Tensor`]s. Differentiable computation is recorded on a
//! [`Graph`] (the computation record): each operation appends a node holding
//! its output and whatever intermediates its backward pass needs. Calling
//! [`Graph::backward`] on the final scalar node walks the record in reverse
//! once and returns [`Gradients`] for every node that requires them.
//!
//! The engine is generic over [`Scalar`]; training runs in `f32` and the
//! gradient-check suites run in `f64`.

mod adam;
mod graph;
pub mod init;
pub mod kernels;
mod scalar;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{BatchNormStats, Gradients, Graph, Mode, Var};
pub use kernels::ConvAlgo;
pub use scalar::Scalar;
pub use tensor::Tensor;

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enables or disables intra-op parallelism over the batch dimension.
///
/// Per-sample work is bit-stable either way; cross-sample reductions are
/// always summed sequentially in sample order.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}
