//! Fitting a network to traces: constraint-preserving weights, the error
//! function and its gradient, Adam, and the early-stopped training loop.

mod adam;
mod grad;
mod params;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub(crate) use grad::max_misplacement;
pub use grad::{backward, loss, model_gradient, normalization_backward, Gradients, ModelGradient};
pub use params::{materialize, RawParams};
pub use train::{split_indices, train, StopReason, TrainConfig, TrainReport};
