use ndarray::Array2;
use rand::Rng;

use crate::dynamics::{stack_rows, GoalPolicy};
use crate::envs::{distance, GoalEnvSpec};
use crate::error::Result;

/// Fixed start states and goals, so every epoch is scored on the same tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub starts: Vec<Vec<f64>>,
    pub goals: Vec<Vec<f64>>,
}

impl EvalSet {
    pub fn sample<R: Rng + ?Sized>(env: &GoalEnvSpec, episodes: usize, rng: &mut R) -> Self {
        let (starts, goals) = (0..episodes)
            .map(|_| {
                let s = env.reset(rng);
                (s.obs, s.goal)
            })
            .unzip();
        Self { starts, goals }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }
}

/// Per-episode results of noise-free rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub successes: Vec<bool>,
    pub final_distances: Vec<f64>,
    /// `Σ_{t<T} γ^t ‖φ(s_t) − g‖²` per episode.
    pub discounted_sq_distances: Vec<f64>,
}

impl EvalOutcome {
    pub fn success_rate(&self) -> f64 {
        success_rate(&self.successes)
    }

    pub fn mean_final_distance(&self) -> f64 {
        mean(&self.final_distances)
    }

    pub fn expected_distance(&self) -> f64 {
        mean(&self.discounted_sq_distances)
    }
}

pub fn success_rate(outcomes: &[bool]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|&&s| s).count() as f64 / outcomes.len() as f64
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// `Σ_t γ^t d_t²` for a sequence of distances.
pub fn discounted_sq_distance(distances: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for d in distances {
        total += discount * d * d;
        discount *= gamma;
    }
    total
}

/// Runs every episode of `set` in lockstep with the deterministic policy.
/// Success is judged at the final state only.
pub fn rollout_eval<P: GoalPolicy + ?Sized>(
    policy: &P,
    env: &GoalEnvSpec,
    set: &EvalSet,
    gamma: f64,
) -> Result<EvalOutcome> {
    let n = set.len();
    let goals = stack_rows(&set.goals, env.goal_dim);
    let mut states: Vec<Vec<f64>> = set.starts.clone();
    let mut distances: Vec<Vec<f64>> = vec![Vec::with_capacity(env.horizon); n];
    for _ in 0..env.horizon {
        for ((d, s), g) in distances.iter_mut().zip(&states).zip(&set.goals) {
            d.push(distance(&env.phi(s), g));
        }
        let batch: Array2<f64> = stack_rows(&states, env.state_dim);
        let actions = policy.act_batch(batch.view(), goals.view())?;
        for (s, a) in states.iter_mut().zip(actions.rows()) {
            let mut a = a.to_vec();
            env.clip_action(&mut a);
            *s = env.transition(s, &a)?;
        }
    }
    Ok(EvalOutcome {
        successes: states
            .iter()
            .zip(&set.goals)
            .map(|(s, g)| env.is_success(s, g))
            .collect(),
        final_distances: states
            .iter()
            .zip(&set.goals)
            .map(|(s, g)| distance(&env.phi(s), g))
            .collect(),
        discounted_sq_distances: distances
            .iter()
            .map(|d| discounted_sq_distance(d, gamma))
            .collect(),
    })
}

/// `(success_rate, mean_final_distance)` over `episodes` fresh tasks.
pub fn evaluate<P: GoalPolicy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    env: &GoalEnvSpec,
    episodes: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let set = EvalSet::sample(env, episodes, rng);
    let outcome = rollout_eval(policy, env, &set, 0.0)?;
    Ok((outcome.success_rate(), outcome.mean_final_distance()))
}

/// Empirical discounted squared distance to the goal over the fixed horizon.
pub fn expected_distance<P: GoalPolicy + ?Sized>(
    policy: &P,
    env: &GoalEnvSpec,
    goal_set: &EvalSet,
    gamma: f64,
) -> Result<f64> {
    Ok(rollout_eval(policy, env, goal_set, gamma)?.expected_distance())
}
