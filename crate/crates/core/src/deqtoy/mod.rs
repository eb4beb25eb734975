//! A single-layer deep equilibrium model `z* = tanh(W z* + U x + b)` with a linear readout.

mod forward;
mod grad;
mod model;
mod power;
mod train;

pub use forward::{deq_forward, deq_forward_with_target, DeqSample, DeqSolver};
pub use grad::{deq_loss, deq_param_grad, DeqDiagnostics};
pub use model::{spectral_norm, DeqBatch, DeqGrads, ReadoutLoss, ToyDeqModel, INIT_SPECTRAL_NORM};
pub use power::{nonlinear_power_method, ZERO_IMAGE_THRESHOLD};
pub use train::{deq_train, DeqTrainConfig};
