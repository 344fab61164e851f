//! Episodic replay and the hindsight relabeling strategies that do not need
//! a dynamics model.

mod buffer;
mod relabel;

pub use buffer::{EpisodeBuffer, Transition};
pub use relabel::{
    perturb_goals, relabel_baseline, relabel_her_future, rewards_consistent, BaselineMode, RelabelMode,
    RelabeledBatch,
};
