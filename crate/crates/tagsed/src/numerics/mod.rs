//! Dense-tensor engine: reverse-mode autodiff, the layer kernels used by
//! every model, Adam, EMA, and the checkpoint format.

#[cfg(test)]
mod fd_tests;

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod gru;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use conv::ConvSpec;
pub use optim::{adam_step, ema_update, AdamConfig, AdamState};
pub use params::{BoundParams, ParamSet};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{Real, Tensor};
