//! Learned delta-state dynamics, virtual policy rollouts and model-based
//! relabeling.

mod model;
mod rollout;

pub use model::{DynamicsModel, OracleModel, TransitionModel};
pub use rollout::{mbr_relabel, policy_rollout, rollout_batch, GoalPolicy, VirtualTrajectory};
pub(crate) use rollout::stack_rows;
