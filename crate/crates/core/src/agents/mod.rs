//! Goal-conditioned learners: the DDPG actor-critic with the joint actor
//! loss, value-expansion critic targets, and GCSL.

mod actor_critic;
mod config;
mod gcsl;
mod policy;

pub use actor_critic::{td_target, ActorCritic, ActorLossTerms, ActorView, JointActorObjective};
pub use config::AgentConfig;
pub use gcsl::GcslAgent;
pub use policy::{InputNormalizer, PolicyNet};
