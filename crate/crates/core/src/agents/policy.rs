use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::AgentConfig;
use crate::dynamics::GoalPolicy;
use crate::envs::GoalEnvSpec;
use crate::error::{ensure, Result};
use crate::nn::OutputActivation;
use crate::normalizer::RunningNormalizer;
use crate::{AdamState, Mlp};

const NORMALIZER_CLIP: f64 = 5.0;

/// Observation and goal statistics shared by the actor and critic inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalizer {
    pub enabled: bool,
    pub obs: RunningNormalizer,
    pub goal: RunningNormalizer,
}

impl InputNormalizer {
    pub fn new(state_dim: usize, goal_dim: usize, enabled: bool) -> Self {
        Self {
            enabled,
            obs: RunningNormalizer::new(state_dim, NORMALIZER_CLIP),
            goal: RunningNormalizer::new(goal_dim, NORMALIZER_CLIP),
        }
    }

    pub fn observe(&mut self, states: ArrayView2<'_, f64>, goals: ArrayView2<'_, f64>) -> Result<()> {
        self.obs.update(states)?;
        self.goal.update(goals)
    }

    pub fn states(&self, states: ArrayView2<'_, f64>) -> Array2<f64> {
        if self.enabled {
            self.obs.normalize(states)
        } else {
            states.to_owned()
        }
    }

    pub fn goals(&self, goals: ArrayView2<'_, f64>) -> Array2<f64> {
        if self.enabled {
            self.goal.normalize(goals)
        } else {
            goals.to_owned()
        }
    }
}

/// Deterministic actor `π(s, g)` with its optimizer and input statistics.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub actor: Mlp,
    pub adam: AdamState,
    pub normalizer: InputNormalizer,
    action_center: Vec<f64>,
    action_half_range: Vec<f64>,
    state_dim: usize,
    goal_dim: usize,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(env: &GoalEnvSpec, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![env.state_dim + env.goal_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(env.action_dim);
        let output = OutputActivation::squash(env.action_low.clone(), env.action_high.clone())?;
        let actor = Mlp::new(&sizes, output, rng)?;
        Ok(Self::from_actor(env, actor, config.normalize_obs))
    }

    pub fn from_actor(env: &GoalEnvSpec, actor: Mlp, normalize: bool) -> Self {
        let (action_center, action_half_range) = env.action_center_and_half_range();
        Self {
            adam: AdamState::new(&actor),
            actor,
            normalizer: InputNormalizer::new(env.state_dim, env.goal_dim, normalize),
            action_center,
            action_half_range,
            state_dim: env.state_dim,
            goal_dim: env.goal_dim,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn goal_dim(&self) -> usize {
        self.goal_dim
    }

    pub fn action_center(&self) -> &[f64] {
        &self.action_center
    }

    pub fn action_half_range(&self) -> &[f64] {
        &self.action_half_range
    }

    /// Normalised `[s ‖ g]` rows fed to the actor.
    pub fn actor_inputs(
        &self,
        states: ArrayView2<'_, f64>,
        goals: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        ensure!(
            states.ncols() == self.state_dim && goals.ncols() == self.goal_dim,
            Shape,
            "policy expects {}-d states and {}-d goals, got {} and {}",
            self.state_dim,
            self.goal_dim,
            states.ncols(),
            goals.ncols()
        );
        let s = self.normalizer.states(states);
        let g = self.normalizer.goals(goals);
        concatenate(Axis(1), &[s.view(), g.view()])
            .map_err(|e| crate::Error::Shape(e.to_string()))
    }

    /// Maps actions in env units to `[-1, 1]` per dimension.
    pub fn scale_actions(&self, actions: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = actions.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.action_center[j]) / self.action_half_range[j];
            }
        }
        out
    }

    /// One action for one state, optionally with exploration.
    ///
    /// Exploring: with probability `eps_random` a uniform action in the box;
    /// otherwise the actor's action plus Gaussian noise of std
    /// `noise_std × half-range`, clipped to the box.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        env: &GoalEnvSpec,
        config: &AgentConfig,
        state: &[f64],
        goal: &[f64],
        explore: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if explore && rng.random::<f64>() < config.eps_random {
            return Ok(env
                .action_low
                .iter()
                .zip(&env.action_high)
                .map(|(&lo, &hi)| rng.random_range(lo..=hi))
                .collect());
        }
        let s = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|e| crate::Error::Shape(e.to_string()))?;
        let g = ArrayView2::from_shape((1, goal.len()), goal)
            .map_err(|e| crate::Error::Shape(e.to_string()))?;
        let mut action = self.act_batch(s, g)?.row(0).to_vec();
        if explore {
            for (a, &half) in action.iter_mut().zip(&self.action_half_range) {
                let z: f64 = StandardNormal.sample(rng);
                *a += config.noise_std * half * z;
            }
            env.clip_action(&mut action);
        }
        Ok(action)
    }
}

impl GoalPolicy for PolicyNet {
    fn act_batch(
        &self,
        states: ArrayView2<'_, f64>,
        goals: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        let inputs = self.actor_inputs(states, goals)?;
        self.actor.forward(inputs.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> AgentConfig {
        AgentConfig {
            hidden: vec![16, 16],
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_path_is_raw_actor_output() {
        let env = GoalEnvSpec::new(EnvKind::Point2DLarge);
        let cfg = small_config();
        let policy = PolicyNet::new(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let s = [1.0, -2.0];
        let g = [3.0, 0.5];
        let a = policy
            .select_action(&env, &cfg, &s, &g, false, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        let direct = policy
            .actor
            .forward(policy.actor_inputs(ndarray::aview2(&[s]), ndarray::aview2(&[g])).unwrap().view())
            .unwrap();
        assert_eq!(a, direct.row(0).to_vec());
    }

    #[test]
    fn full_random_probability_ignores_actor() {
        let env = GoalEnvSpec::new(EnvKind::Point2DLarge);
        let cfg = AgentConfig { eps_random: 1.0, ..small_config() };
        let mut policy = PolicyNet::new(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // An actor pinned to one corner would never produce negative actions.
        for p in policy.actor.params_mut() {
            *p = 0.0;
        }
        policy.actor.bias_mut(2).copy_from_slice(&[50.0, 50.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut negatives = 0;
        for _ in 0..1000 {
            let a = policy.select_action(&env, &cfg, &[0.0, 0.0], &[1.0, 1.0], true, &mut rng).unwrap();
            assert!(env.action_in_box(&a));
            negatives += a.iter().filter(|&&v| v < 0.0).count();
        }
        assert!(negatives > 800, "{negatives}");
    }

    #[test]
    fn random_branch_frequency() {
        let env = GoalEnvSpec::new(EnvKind::Point2DLarge);
        let cfg = AgentConfig { noise_std: 0.0, ..small_config() };
        let policy = PolicyNet::new(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let greedy = policy
            .select_action(&env, &cfg, &[0.5, 0.5], &[-1.0, 2.0], false, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 10_000;
        let random = (0..draws)
            .filter(|_| {
                policy
                    .select_action(&env, &cfg, &[0.5, 0.5], &[-1.0, 2.0], true, &mut rng)
                    .unwrap()
                    != greedy
            })
            .count();
        let frac = random as f64 / draws as f64;
        assert!((0.28..=0.32).contains(&frac), "{frac}");
    }

    #[test]
    fn exploration_stays_in_box() {
        let env = GoalEnvSpec::new(EnvKind::PlanarReacher);
        let cfg = AgentConfig { noise_std: 5.0, ..small_config() };
        let policy = PolicyNet::new(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let state = env.reset(&mut rng);
        for _ in 0..500 {
            let a = policy
                .select_action(&env, &cfg, &state.obs, &state.goal, true, &mut rng)
                .unwrap();
            assert!(env.action_in_box(&a));
        }
    }
}
