//! Multi-goal reinforcement learning with model-based hindsight relabeling.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: a small MLP engine generic over the float type,
//! * [`envs`]: sparse-reward goal-reaching tasks,
//! * [`replay`]: the episodic buffer and hindsight relabeling strategies,
//! * [`dynamics`]: the learned delta-state model and model-based relabeling,
//! * [`agents`]: DDPG-family learners, GCSL and value-expansion targets,
//! * [`harness`]: the training loop, evaluation, metrics and aggregation.

pub mod agents;
pub mod dynamics;
pub mod envs;
pub mod harness;
mod error;
pub mod nn;
pub mod replay;
pub mod normalizer;

pub use error::{Error, Result};

/// Double-precision network, the width the learning stack runs on.
pub type Mlp = nn::MlpModel<f64>;
/// Single-precision network.
pub type Mlp32 = nn::MlpModel<f32>;
pub type Gradients = nn::Gradients<f64>;
pub type AdamState = nn::AdamState<f64>;
