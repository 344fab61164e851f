use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use rand::Rng;

use super::actor_critic::{load_sidecar, save_sidecar, BatchArrays};
use super::config::AgentConfig;
use super::policy::PolicyNet;
use crate::envs::GoalEnvSpec;
use crate::error::{Error, Result};
use crate::nn::{adam_step, backward, checkpoint, MseLoss};
use crate::replay::{RelabeledBatch, Transition};

/// Goal-conditioned supervised learning: a policy regressed onto the actions
/// of hindsight-relabeled rows. No critic, no target networks.
#[derive(Debug, Clone)]
pub struct GcslAgent {
    pub config: AgentConfig,
    pub env: GoalEnvSpec,
    pub policy: PolicyNet,
}

impl GcslAgent {
    pub fn new<R: Rng + ?Sized>(env: &GoalEnvSpec, config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            policy: PolicyNet::new(env, &config, rng)?,
            env: env.clone(),
            config,
        })
    }

    pub fn observe(&mut self, states: ArrayView2<'_, f64>, goals: ArrayView2<'_, f64>) -> Result<()> {
        self.policy.normalizer.observe(states, goals)
    }

    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        goal: &[f64],
        explore: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.policy
            .select_action(&self.env, &self.config, state, goal, explore, rng)
    }

    /// `mean ‖a − π(s, g′)‖²` over the relabeled rows, or `None` if there are none.
    pub fn objective(&self, batch: &RelabeledBatch) -> Result<Option<MseLoss<f64>>> {
        let rows: Vec<&Transition> = batch
            .rows
            .iter()
            .zip(&batch.sl_mask)
            .filter(|(_, &m)| m)
            .map(|(r, _)| r)
            .collect();
        if rows.is_empty() {
            return Ok(None);
        }
        let arrays = BatchArrays::from_rows(rows.iter().copied(), &self.env);
        let inputs = self
            .policy
            .actor_inputs(arrays.states.view(), arrays.goals.view())?;
        Ok(Some(MseLoss::new(inputs, arrays.actions)?))
    }

    /// One Adam step on the supervised loss; returns the pre-step loss.
    /// A batch without relabeled rows leaves the policy untouched and reports 0.
    pub fn gcsl_update(&mut self, batch: &RelabeledBatch) -> Result<f64> {
        let Some(objective) = self.objective(batch)? else {
            return Ok(0.0);
        };
        let (loss, grads) = backward(&self.policy.actor, &objective)?;
        adam_step(
            &mut self.policy.actor,
            &grads,
            &mut self.policy.adam,
            self.config.lr_actor,
        )?;
        Ok(loss)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save(&self.policy.actor, dir.join("actor.mlp"))?;
        save_sidecar(dir, &self.config, &self.policy.normalizer)
    }

    pub fn load(dir: impl AsRef<Path>, env: &GoalEnvSpec) -> Result<Self> {
        let dir = dir.as_ref();
        let sidecar = load_sidecar(dir)?;
        let actor = checkpoint::load(dir.join("actor.mlp"))?;
        let mut policy = PolicyNet::from_actor(env, actor, sidecar.config.normalize_obs);
        policy.normalizer = sidecar.normalizer;
        Ok(Self {
            config: sidecar.config,
            env: env.clone(),
            policy,
        })
    }
}
