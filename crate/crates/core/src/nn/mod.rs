//! Minimal differentiable MLP engine: forward/backward passes, Adam,
//! Polyak-averaged targets, gradient checking and checkpoints.

mod adam;
pub mod checkpoint;
mod mlp;
mod objective;
mod scalar;

pub use adam::{adam_step, polyak_update, AdamState};
pub use mlp::{check_finite, Gradients, MlpModel, OutputActivation, Trace};
pub use objective::{
    backward, grad_check, grad_check_against, mean_squared_norm, MseLoss, Objective,
    GRAD_CHECK_FLOOR,
};
pub use scalar::Scalar;
