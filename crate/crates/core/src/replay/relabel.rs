use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::buffer::{EpisodeBuffer, Transition};
use crate::envs::{distance, GoalEnvSpec};
use crate::error::{ensure, Error, Result};

/// How sampled transitions get their goals rewritten before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelabelMode {
    /// Keep the desired goal.
    None,
    /// Achieved goal of a later state of the same episode.
    HerFuture,
    /// Virtual achieved goal from a policy rollout through the learned model.
    Mbr,
    /// Goal drawn from the task's goal distribution.
    Random,
    /// Future goal plus isotropic Gaussian noise.
    GoalNoise,
}

impl RelabelMode {
    pub const ALL: [RelabelMode; 5] = [
        RelabelMode::None,
        RelabelMode::HerFuture,
        RelabelMode::Mbr,
        RelabelMode::Random,
        RelabelMode::GoalNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelabelMode::None => "none",
            RelabelMode::HerFuture => "her-future",
            RelabelMode::Mbr => "mbr",
            RelabelMode::Random => "random",
            RelabelMode::GoalNoise => "goal-noise",
        }
    }
}

impl fmt::Display for RelabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelabelMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "relabel mode",
                name: s.to_string(),
            })
    }
}

/// A minibatch after relabeling.
#[derive(Debug, Clone, PartialEq)]
pub struct RelabeledBatch {
    pub rows: Vec<Transition>,
    /// True iff the row's goal was rewritten; these rows feed the supervised term.
    pub sl_mask: Vec<bool>,
    /// Desired goal each row carried before relabeling.
    pub original_goals: Vec<Vec<f64>>,
    /// For model-based relabeling, which rollout candidate was chosen.
    pub candidate_index: Vec<Option<usize>>,
    /// Rows whose episode had been evicted and were left untouched.
    pub evicted_rows: usize,
}

impl RelabeledBatch {
    /// The batch exactly as sampled, nothing relabeled.
    pub fn unchanged(rows: Vec<Transition>) -> Self {
        let n = rows.len();
        Self {
            original_goals: rows.iter().map(|r| r.goal.clone()).collect(),
            sl_mask: vec![false; n],
            candidate_index: vec![None; n],
            evicted_rows: 0,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn relabeled_count(&self) -> usize {
        self.sl_mask.iter().filter(|&&m| m).count()
    }

    /// Rewrites row `i`'s goal and recomputes its reward from its achieved next state.
    pub fn set_goal(&mut self, env: &GoalEnvSpec, i: usize, goal: Vec<f64>) -> Result<()> {
        let row = &mut self.rows[i];
        row.reward = env.sparse_reward(&env.phi(&row.next_state), &goal)?;
        row.goal = goal;
        self.sl_mask[i] = true;
        Ok(())
    }

    /// `‖g′ − g_desired‖` for every relabeled row.
    pub fn relabel_distances(&self) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.original_goals)
            .zip(&self.sl_mask)
            .filter(|(_, &m)| m)
            .map(|((row, orig), _)| distance(&row.goal, orig))
            .collect()
    }
}

fn check_probability(p: f64) -> Result<()> {
    ensure!(
        (0.0..=1.0).contains(&p),
        InvalidArgument,
        "relabel probability {p} outside [0, 1]"
    );
    Ok(())
}

/// Hindsight "future" relabeling: with probability `p_relabel` a row at step
/// `t` takes `φ(s_{t+k})`, `k` uniform in `1..=T−t`, as its goal.
pub fn relabel_her_future<R: Rng + ?Sized>(
    batch: Vec<Transition>,
    buffer: &EpisodeBuffer,
    env: &GoalEnvSpec,
    p_relabel: f64,
    rng: &mut R,
) -> Result<RelabeledBatch> {
    check_probability(p_relabel)?;
    let horizon = buffer.horizon();
    let mut out = RelabeledBatch::unchanged(batch);
    for i in 0..out.len() {
        if rng.random::<f64>() >= p_relabel {
            continue;
        }
        let (id, t) = (out.rows[i].episode_id, out.rows[i].t);
        if !buffer.contains_episode(id) {
            out.evicted_rows += 1;
            continue;
        }
        let k = rng.random_range(1..=horizon - t);
        let future = buffer
            .state_at(id, t + k)
            .expect("future index lies inside a resident episode");
        let goal = env.phi(future);
        out.set_goal(env, i, goal)?;
    }
    Ok(out)
}

/// Non-hindsight baselines for comparison with hindsight relabeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    Random,
    GoalNoise,
}

impl TryFrom<RelabelMode> for BaselineMode {
    type Error = Error;

    fn try_from(mode: RelabelMode) -> Result<Self> {
        match mode {
            RelabelMode::Random => Ok(BaselineMode::Random),
            RelabelMode::GoalNoise => Ok(BaselineMode::GoalNoise),
            other => Err(Error::UnknownName {
                kind: "baseline relabel mode",
                name: other.to_string(),
            }),
        }
    }
}

/// `random`: goals drawn from the task's goal distribution. `goal-noise`: the
/// hindsight future goal perturbed by `N(0, noise_std²)` per dimension. The
/// noise pass runs after the whole hindsight pass so zero noise reproduces
/// [`relabel_her_future`] under the same random stream.
pub fn relabel_baseline<R: Rng + ?Sized>(
    batch: Vec<Transition>,
    buffer: &EpisodeBuffer,
    env: &GoalEnvSpec,
    mode: BaselineMode,
    p_relabel: f64,
    noise_std: f64,
    rng: &mut R,
) -> Result<RelabeledBatch> {
    check_probability(p_relabel)?;
    match mode {
        BaselineMode::Random => {
            let mut out = RelabeledBatch::unchanged(batch);
            for i in 0..out.len() {
                if rng.random::<f64>() < p_relabel {
                    let goal = env.sample_goal(rng);
                    out.set_goal(env, i, goal)?;
                }
            }
            Ok(out)
        }
        BaselineMode::GoalNoise => {
            let mut out = relabel_her_future(batch, buffer, env, p_relabel, rng)?;
            perturb_goals(&mut out, env, noise_std, rng)?;
            Ok(out)
        }
    }
}

/// Adds `N(0, noise_std²)` to every coordinate of each relabeled goal and
/// recomputes the rewards.
pub fn perturb_goals<R: Rng + ?Sized>(
    batch: &mut RelabeledBatch,
    env: &GoalEnvSpec,
    noise_std: f64,
    rng: &mut R,
) -> Result<()> {
    let noise = Normal::new(0.0, noise_std)
        .map_err(|e| Error::InvalidArgument(format!("goal noise std {noise_std}: {e}")))?;
    for i in 0..batch.len() {
        if !batch.sl_mask[i] {
            continue;
        }
        let goal: Vec<f64> = batch.rows[i]
            .goal
            .iter()
            .map(|&g| g + noise.sample(rng))
            .collect();
        batch.set_goal(env, i, goal)?;
    }
    Ok(())
}

/// Full-buffer self-consistency: every stored reward equals the sparse reward
/// of its achieved next state against its goal.
pub fn rewards_consistent(rows: &[Transition], env: &GoalEnvSpec) -> bool {
    rows.iter().all(|row| {
        env.sparse_reward(&env.phi(&row.next_state), &row.goal)
            .map(|r| r == row.reward)
            .unwrap_or(false)
    })
}
