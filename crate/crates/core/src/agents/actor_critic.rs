use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::AgentConfig;
use super::policy::{InputNormalizer, PolicyNet};
use crate::dynamics::{rollout_batch, stack_rows, GoalPolicy, TransitionModel};
use crate::envs::GoalEnvSpec;
use crate::error::{ensure, Error, Result};
use crate::nn::{
    adam_step, backward, checkpoint, mean_squared_norm, polyak_update, MseLoss, Objective,
    OutputActivation,
};
use crate::replay::{RelabeledBatch, Transition};
use crate::{AdamState, Gradients, Mlp};

/// `r + γ q`, clamped to the reachable return range `[−1/(1−γ), 0]` when `clip` is set.
pub fn td_target(reward: f64, gamma: f64, q_next: f64, clip: bool) -> f64 {
    let y = reward + gamma * q_next;
    if clip {
        y.clamp(-1.0 / (1.0 - gamma), 0.0)
    } else {
        y
    }
}

/// A network driven through a policy's input normalisation.
pub struct ActorView<'a> {
    pub net: &'a Mlp,
    pub policy: &'a PolicyNet,
}

impl GoalPolicy for ActorView<'_> {
    fn act_batch(
        &self,
        states: ArrayView2<'_, f64>,
        goals: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        let inputs = self.policy.actor_inputs(states, goals)?;
        self.net.forward(inputs.view())
    }
}

/// Row-major views of a batch of transitions.
pub(crate) struct BatchArrays {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub next_states: Array2<f64>,
    pub goals: Array2<f64>,
    pub rewards: Vec<f64>,
}

impl BatchArrays {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a Transition>, env: &GoalEnvSpec) -> Self {
        let rows: Vec<&Transition> = rows.into_iter().collect();
        Self {
            states: stack_rows(rows.iter().map(|r| &r.state), env.state_dim),
            actions: stack_rows(rows.iter().map(|r| &r.action), env.action_dim),
            next_states: stack_rows(rows.iter().map(|r| &r.next_state), env.state_dim),
            goals: stack_rows(rows.iter().map(|r| &r.goal), env.goal_dim),
            rewards: rows.iter().map(|r| r.reward).collect(),
        }
    }
}

/// DDPG learner: deterministic actor, scalar critic and their target copies.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub config: AgentConfig,
    pub env: GoalEnvSpec,
    pub policy: PolicyNet,
    pub critic: Mlp,
    pub critic_adam: AdamState,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
}

/// Values of the two actor loss terms before the step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActorLossTerms {
    /// `−mean Q(s, π(s, g), g)`.
    pub q_term: f64,
    /// `mean ‖a − π(s, g)‖²` over the supervised rows, zero if there are none.
    pub sl_term: f64,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(env: &GoalEnvSpec, config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let policy = PolicyNet::new(env, &config, rng)?;
        let mut sizes = vec![env.state_dim + env.action_dim + env.goal_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let critic = Mlp::new(&sizes, OutputActivation::Identity, rng)?;
        Ok(Self {
            target_actor: policy.actor.clone(),
            target_critic: critic.clone(),
            critic_adam: AdamState::new(&critic),
            critic,
            policy,
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

    /// Normalised `[s ‖ (a − c)/h ‖ g]` rows fed to the critic.
    pub fn critic_inputs(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
        goals: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        let s = self.policy.normalizer.states(states);
        let g = self.policy.normalizer.goals(goals);
        let a = self.policy.scale_actions(actions);
        concatenate(Axis(1), &[s.view(), a.view(), g.view()])
            .map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn q_values(
        &self,
        critic: &Mlp,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
        goals: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>> {
        let inputs = self.critic_inputs(states, actions, goals)?;
        Ok(critic.forward(inputs.view())?.column(0).to_vec())
    }

    fn target_policy(&self) -> ActorView<'_> {
        ActorView {
            net: &self.target_actor,
            policy: &self.policy,
        }
    }

    /// `Q_target(s, π_target(s, g), g)` per row.
    fn target_values(&self, states: ArrayView2<'_, f64>, goals: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let actions = self.target_policy().act_batch(states, goals)?;
        self.q_values(&self.target_critic, states, actions.view(), goals)
    }

    /// One-step bootstrapped targets for every row.
    pub fn critic_target(
        &self,
        rewards: &[f64],
        next_states: ArrayView2<'_, f64>,
        goals: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>> {
        let q = self.target_values(next_states, goals)?;
        Ok(rewards
            .iter()
            .zip(q)
            .map(|(&r, q)| td_target(r, self.config.gamma, q, self.config.target_clip))
            .collect())
    }

    /// `H`-step targets: real reward, `H − 1` model steps under the target
    /// actor with rewards read off each predicted next state, then the target
    /// critic at the last predicted state.
    pub fn mve_target<M: TransitionModel + ?Sized>(
        &self,
        rewards: &[f64],
        next_states: ArrayView2<'_, f64>,
        goals: ArrayView2<'_, f64>,
        model: &M,
        horizon: usize,
    ) -> Result<Vec<f64>> {
        ensure!(horizon >= 1, InvalidArgument, "expansion horizon must be at least 1");
        let gamma = self.config.gamma;
        let path = rollout_batch(model, &self.target_policy(), next_states, goals, horizon - 1)?;
        let mut returns = rewards.to_vec();
        // γ^i for the virtual reward at step i, ending at γ^(H−1).
        let mut discount = 1.0;
        for states in &path[1..] {
            discount *= gamma;
            for ((ret, s), g) in returns.iter_mut().zip(states.rows()).zip(goals.rows()) {
                let achieved = self.env.phi(s.as_slice().expect("owned rows are contiguous"));
                let reward = self.env.sparse_reward(&achieved, &g.to_vec())?;
                *ret += discount * reward;
            }
        }
        let last = path.last().expect("rollout yields at least the seed");
        let q = self.target_values(last.view(), goals)?;
        Ok(returns
            .iter()
            .zip(q)
            .map(|(&r, q)| td_target(r, gamma, discount * q, self.config.target_clip))
            .collect())
    }

    fn critic_step(&mut self, arrays: &BatchArrays, targets: Vec<f64>) -> Result<f64> {
        let inputs = self.critic_inputs(arrays.states.view(), arrays.actions.view(), arrays.goals.view())?;
        let targets = Array2::from_shape_vec((targets.len(), 1), targets)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let objective = MseLoss::new(inputs, targets)?;
        let (loss, grads) = backward(&self.critic, &objective)?;
        adam_step(&mut self.critic, &grads, &mut self.critic_adam, self.config.lr_critic)?;
        Ok(loss)
    }

    /// One Adam step on `mean (y − Q(s, a, g))²` with one-step targets.
    /// Returns the loss before the step.
    pub fn critic_update(&mut self, batch: &RelabeledBatch) -> Result<f64> {
        let arrays = BatchArrays::from_rows(&batch.rows, &self.env);
        let y = self.critic_target(&arrays.rewards, arrays.next_states.view(), arrays.goals.view())?;
        self.critic_step(&arrays, y)
    }

    /// Same as [`ActorCritic::critic_update`] with `H`-step model targets.
    pub fn critic_update_mve<M: TransitionModel + ?Sized>(
        &mut self,
        batch: &RelabeledBatch,
        model: &M,
    ) -> Result<f64> {
        let arrays = BatchArrays::from_rows(&batch.rows, &self.env);
        let y = self.mve_target(
            &arrays.rewards,
            arrays.next_states.view(),
            arrays.goals.view(),
            model,
            self.config.mve_horizon,
        )?;
        self.critic_step(&arrays, y)
    }

    /// Actor objective with the Q-term and the supervised term on the same batch.
    pub fn joint_objective(&self, batch: &RelabeledBatch, alpha: f64) -> Result<JointActorObjective<'_>> {
        self.split_objective(batch, batch, alpha)
    }

    /// Q-term on `q_batch`, supervised term on the masked rows of `sl_batch`.
    pub fn split_objective(
        &self,
        q_batch: &RelabeledBatch,
        sl_batch: &RelabeledBatch,
        alpha: f64,
    ) -> Result<JointActorObjective<'_>> {
        ensure!(alpha >= 0.0, InvalidArgument, "alpha must be non-negative");
        ensure!(!q_batch.is_empty(), InvalidArgument, "empty actor batch");
        let q = BatchArrays::from_rows(&q_batch.rows, &self.env);
        let sl_rows: Vec<&Transition> = sl_batch
            .rows
            .iter()
            .zip(&sl_batch.sl_mask)
            .filter(|(_, &m)| m)
            .map(|(r, _)| r)
            .collect();
        let sl = if alpha > 0.0 && !sl_rows.is_empty() {
            let arrays = BatchArrays::from_rows(sl_rows.iter().copied(), &self.env);
            Some((
                self.policy.actor_inputs(arrays.states.view(), arrays.goals.view())?,
                arrays.actions,
            ))
        } else {
            None
        };
        Ok(JointActorObjective {
            critic: &self.critic,
            q_states: self.policy.normalizer.states(q.states.view()),
            q_goals: self.policy.normalizer.goals(q.goals.view()),
            q_actor_inputs: self.policy.actor_inputs(q.states.view(), q.goals.view())?,
            sl,
            alpha,
            action_center: self.policy.action_center().to_vec(),
            action_half_range: self.policy.action_half_range().to_vec(),
        })
    }

    fn actor_gradient(&self, objective: &JointActorObjective<'_>) -> Result<(ActorLossTerms, Gradients)> {
        let (terms, grads) = objective.evaluate(&self.policy.actor, true)?;
        let grads = grads.expect("gradient requested");
        if !grads.all_finite() || !terms.q_term.is_finite() || !terms.sl_term.is_finite() {
            return Err(Error::Numerical("non-finite actor loss or gradient".into()));
        }
        Ok((terms, grads))
    }

    /// One Adam step on `−mean Q + α · mean_masked ‖a − π‖²` with the critic frozen.
    pub fn actor_update_joint(&mut self, batch: &RelabeledBatch, alpha: f64) -> Result<ActorLossTerms> {
        self.actor_update_split(batch, batch, alpha)
    }

    pub fn actor_update_split(
        &mut self,
        q_batch: &RelabeledBatch,
        sl_batch: &RelabeledBatch,
        alpha: f64,
    ) -> Result<ActorLossTerms> {
        let (terms, grads) = {
            let objective = self.split_objective(q_batch, sl_batch, alpha)?;
            self.actor_gradient(&objective)?
        };
        adam_step(
            &mut self.policy.actor,
            &grads,
            &mut self.policy.adam,
            self.config.lr_actor,
        )?;
        Ok(terms)
    }

    /// Polyak-averages both target networks towards their online copies.
    pub fn update_targets(&mut self) -> Result<()> {
        polyak_update(&mut self.target_actor, &self.policy.actor, self.config.polyak)?;
        polyak_update(&mut self.target_critic, &self.critic, self.config.polyak)
    }

    /// Writes `actor.mlp`, `critic.mlp`, their targets and `agent.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save(&self.policy.actor, dir.join("actor.mlp"))?;
        checkpoint::save(&self.critic, dir.join("critic.mlp"))?;
        checkpoint::save(&self.target_actor, dir.join("target_actor.mlp"))?;
        checkpoint::save(&self.target_critic, dir.join("target_critic.mlp"))?;
        save_sidecar(dir, &self.config, &self.policy.normalizer)
    }

    /// Restores networks and statistics; optimizer moments start fresh.
    pub fn load(dir: impl AsRef<Path>, env: &GoalEnvSpec) -> Result<Self> {
        let dir = dir.as_ref();
        let sidecar = load_sidecar(dir)?;
        let actor: Mlp = checkpoint::load(dir.join("actor.mlp"))?;
        let critic: Mlp = checkpoint::load(dir.join("critic.mlp"))?;
        let target_actor: Mlp = checkpoint::load(dir.join("target_actor.mlp"))?;
        let target_critic: Mlp = checkpoint::load(dir.join("target_critic.mlp"))?;
        let mut policy = PolicyNet::from_actor(env, actor, sidecar.config.normalize_obs);
        policy.normalizer = sidecar.normalizer;
        Ok(Self {
            config: sidecar.config,
            env: env.clone(),
            policy,
            critic_adam: AdamState::new(&critic),
            critic,
            target_actor,
            target_critic,
        })
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct Sidecar {
    pub config: AgentConfig,
    pub normalizer: InputNormalizer,
}

pub(crate) fn save_sidecar(dir: &Path, config: &AgentConfig, normalizer: &InputNormalizer) -> Result<()> {
    let path = dir.join("agent.json");
    let body = serde_json::to_string_pretty(&Sidecar {
        config: config.clone(),
        normalizer: normalizer.clone(),
    })?;
    fs::write(&path, body).map_err(|e| Error::io(path, e))
}

pub(crate) fn load_sidecar(dir: &Path) -> Result<Sidecar> {
    let path = dir.join("agent.json");
    let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&body)?)
}

/// `−mean_rows Q(s, π(s, g), g) + α · mean_sl ‖a − π(s, g)‖²` as a function of
/// the actor's parameters. The critic is held fixed.
pub struct JointActorObjective<'a> {
    critic: &'a Mlp,
    q_states: Array2<f64>,
    q_goals: Array2<f64>,
    q_actor_inputs: Array2<f64>,
    /// Actor inputs and target actions of the supervised rows.
    sl: Option<(Array2<f64>, Array2<f64>)>,
    alpha: f64,
    action_center: Vec<f64>,
    action_half_range: Vec<f64>,
}

impl JointActorObjective<'_> {
    /// Number of rows in the supervised term.
    pub fn sl_rows(&self) -> usize {
        self.sl.as_ref().map_or(0, |(x, _)| x.nrows())
    }

    pub fn terms(&self, actor: &Mlp) -> Result<ActorLossTerms> {
        Ok(self.evaluate(actor, false)?.0)
    }

    fn evaluate(&self, actor: &Mlp, want_grad: bool) -> Result<(ActorLossTerms, Option<Gradients>)> {
        let n_q = self.q_actor_inputs.nrows();
        let inputs = match &self.sl {
            Some((x, _)) => concatenate(Axis(0), &[self.q_actor_inputs.view(), x.view()])
                .map_err(|e| Error::Shape(e.to_string()))?,
            None => self.q_actor_inputs.clone(),
        };
        let trace = actor.forward_trace(inputs.view())?;
        let actions = trace.output().slice(s![..n_q, ..]);

        let mut scaled = actions.to_owned();
        for mut row in scaled.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.action_center[j]) / self.action_half_range[j];
            }
        }
        let critic_in = concatenate(
            Axis(1),
            &[self.q_states.view(), scaled.view(), self.q_goals.view()],
        )
        .map_err(|e| Error::Shape(e.to_string()))?;
        let critic_trace = self.critic.forward_trace(critic_in.view())?;
        let q_term = -critic_trace.output().sum() / n_q as f64;

        let sl_residual = self.sl.as_ref().map(|(_, targets)| {
            &trace.output().slice(s![n_q.., ..]) - targets
        });
        let sl_term = sl_residual
            .as_ref()
            .map_or(0.0, |r| mean_squared_norm(r.view()));
        let terms = ActorLossTerms { q_term, sl_term };
        if !want_grad {
            return Ok((terms, None));
        }

        let d_q = Array2::from_elem((n_q, 1), -1.0 / n_q as f64);
        let (_, d_critic_in) = self.critic.backprop(&critic_trace, d_q.view())?;
        let state_dim = self.q_states.ncols();
        let action_dim = self.action_center.len();
        let mut d_actions = Array2::zeros(trace.output().raw_dim());
        {
            let mut d_q_rows = d_actions.slice_mut(s![..n_q, ..]);
            d_q_rows.assign(&d_critic_in.slice(s![.., state_dim..state_dim + action_dim]));
            for mut row in d_q_rows.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v /= self.action_half_range[j];
                }
            }
        }
        if let Some(residual) = &sl_residual {
            let scale = 2.0 * self.alpha / residual.nrows() as f64;
            d_actions
                .slice_mut(s![n_q.., ..])
                .assign(&residual.mapv(|r| r * scale));
        }
        let (grads, _) = actor.backprop(&trace, d_actions.view())?;
        Ok((terms, Some(grads)))
    }
}

impl Objective<f64> for JointActorObjective<'_> {
    fn value(&self, model: &Mlp) -> Result<f64> {
        let terms = self.terms(model)?;
        Ok(terms.q_term + self.alpha * terms.sl_term)
    }

    fn value_and_grad(&self, model: &Mlp) -> Result<(f64, Gradients)> {
        let (terms, grads) = self.evaluate(model, true)?;
        Ok((
            terms.q_term + self.alpha * terms.sl_term,
            grads.expect("gradient requested"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::OracleModel;
    use crate::envs::EnvKind;
    use crate::nn::grad_check;
    use crate::replay::RelabeledBatch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(config: AgentConfig) -> AgentConfig {
        AgentConfig {
            hidden: vec![16, 16],
            ..config
        }
    }

    fn agent(seed: u64, config: AgentConfig) -> ActorCritic {
        let env = GoalEnvSpec::new(EnvKind::Point2DLarge);
        ActorCritic::new(&env, small(config), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn random_batch(env: &GoalEnvSpec, n: usize, seed: u64) -> RelabeledBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|t| {
                let state: Vec<f64> = (0..2).map(|_| rng.random_range(-4.0..4.0)).collect();
                let action: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let next_state = env.transition(&state, &action).unwrap();
                let goal = env.sample_goal(&mut rng);
                Transition {
                    reward: env.sparse_reward(&next_state, &goal).unwrap(),
                    state,
                    action,
                    next_state,
                    goal,
                    episode_id: 0,
                    t,
                }
            })
            .collect();
        let mut batch = RelabeledBatch::unchanged(rows);
        for i in (0..n).step_by(2) {
            let goal = batch.rows[i].next_state.clone();
            batch.set_goal(env, i, goal).unwrap();
        }
        batch
    }

    /// Target critic returning `q` everywhere.
    fn constant_target_critic(agent: &mut ActorCritic, q: f64) {
        agent.target_critic.params_mut().fill(0.0);
        let last = agent.target_critic.num_layers() - 1;
        agent.target_critic.bias_mut(last)[0] = q;
    }

    fn one_row(v: &[f64]) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((1, v.len()), v).unwrap()
    }

    #[test]
    fn critic_target_arithmetic() {
        let mut a = agent(0, AgentConfig::default());
        let s = [1.0, 1.0];
        let g = [0.0, 0.0];
        constant_target_critic(&mut a, -5.0);
        let y = a.critic_target(&[-1.0], one_row(&s), one_row(&g)).unwrap();
        assert!((y[0] - (-5.9)).abs() < 1e-12, "{}", y[0]);
        constant_target_critic(&mut a, 0.0);
        assert_eq!(a.critic_target(&[0.0], one_row(&s), one_row(&g)).unwrap(), vec![0.0]);
        constant_target_critic(&mut a, -80.0);
        let y = a.critic_target(&[-1.0], one_row(&s), one_row(&g)).unwrap();
        assert!((y[0] - (-50.0)).abs() < 1e-9, "{}", y[0]);

        a.config.target_clip = false;
        let y = a.critic_target(&[-1.0], one_row(&s), one_row(&g)).unwrap();
        assert!((y[0] - (-1.0 - 0.98 * 80.0)).abs() < 1e-9);
    }

    #[test]
    fn mve_two_step_arithmetic() {
        let mut a = agent(1, AgentConfig::default());
        constant_target_critic(&mut a, -5.0);
        let env = a.env.clone();
        let oracle = OracleModel { env: &env };
        // The goal is far away, so the virtual reward is −1.
        let y = a
            .mve_target(&[-1.0], one_row(&[0.0, 0.0]), one_row(&[4.5, 4.5]), &oracle, 2)
            .unwrap();
        assert!((y[0] - (-6.782)).abs() < 1e-12, "{}", y[0]);
    }

    #[test]
    fn mve_horizon_one_is_critic_target() {
        let a = agent(2, AgentConfig::default());
        let env = a.env.clone();
        let batch = random_batch(&env, 32, 3);
        let arrays = BatchArrays::from_rows(&batch.rows, &env);
        let oracle = OracleModel { env: &env };
        let one = a
            .critic_target(&arrays.rewards, arrays.next_states.view(), arrays.goals.view())
            .unwrap();
        let mve = a
            .mve_target(&arrays.rewards, arrays.next_states.view(), arrays.goals.view(), &oracle, 1)
            .unwrap();
        assert_eq!(one, mve);
    }

    #[test]
    fn mve_matches_analytic_return_with_oracle() {
        let a = agent(4, AgentConfig { target_clip: false, ..Default::default() });
        let env = a.env.clone();
        let oracle = OracleModel { env: &env };
        let batch = random_batch(&env, 16, 5);
        let arrays = BatchArrays::from_rows(&batch.rows, &env);
        for horizon in 1..=4 {
            let mve = a
                .mve_target(&arrays.rewards, arrays.next_states.view(), arrays.goals.view(), &oracle, horizon)
                .unwrap();
            for (i, row) in batch.rows.iter().enumerate() {
                let mut ret = row.reward;
                let mut state = row.next_state.clone();
                let mut discount = 1.0;
                for _ in 1..horizon {
                    let action = a.target_policy().act_batch(one_row(&state), one_row(&row.goal)).unwrap();
                    let mut action = action.row(0).to_vec();
                    env.clip_action(&mut action);
                    state = env.transition(&state, &action).unwrap();
                    discount *= a.config.gamma;
                    ret += discount * env.sparse_reward(&state, &row.goal).unwrap();
                }
                let act = a.target_policy().act_batch(one_row(&state), one_row(&row.goal)).unwrap();
                let q = a.q_values(&a.target_critic, one_row(&state), act.view(), one_row(&row.goal)).unwrap()[0];
                let expected = ret + discount * a.config.gamma * q;
                assert!((mve[i] - expected).abs() < 1e-12, "H={horizon} row {i}: {} vs {expected}", mve[i]);
            }
        }
    }

    #[test]
    fn critic_loss_is_zero_when_q_matches_target() {
        let mut a = agent(6, AgentConfig::default());
        constant_target_critic(&mut a, 0.0);
        a.critic.params_mut().fill(0.0);
        let env = a.env.clone();
        let mut batch = random_batch(&env, 8, 7);
        for row in &mut batch.rows {
            row.reward = 0.0;
        }
        let before = a.critic.clone();
        assert_eq!(a.critic_update(&batch).unwrap(), 0.0);
        assert_eq!(a.critic, before);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut a = agent(8, AgentConfig::default());
        let env = a.env.clone();
        let batch = random_batch(&env, 16, 9);
        let arrays = BatchArrays::from_rows(&batch.rows, &env);
        a.observe(arrays.states.view(), arrays.goals.view()).unwrap();
        let y = a
            .critic_target(&arrays.rewards, arrays.next_states.view(), arrays.goals.view())
            .unwrap();
        let inputs = a
            .critic_inputs(arrays.states.view(), arrays.actions.view(), arrays.goals.view())
            .unwrap();
        let objective = MseLoss::new(inputs, Array2::from_shape_vec((16, 1), y).unwrap()).unwrap();
        let err = grad_check(&a.critic, &objective, 1e-6).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let mut a = agent(10, AgentConfig::default());
        let env = a.env.clone();
        let batch = random_batch(&env, 16, 11);
        let arrays = BatchArrays::from_rows(&batch.rows, &env);
        a.observe(arrays.states.view(), arrays.goals.view()).unwrap();
        let objective = a.joint_objective(&batch, 3.0).unwrap();
        assert_eq!(objective.sl_rows(), 8);
        let err = grad_check(&a.policy.actor, &objective, 1e-6).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn sl_term_vanishes_when_actor_reproduces_actions() {
        let a = agent(12, AgentConfig::default());
        let env = a.env.clone();
        let mut batch = random_batch(&env, 8, 13);
        for row in &mut batch.rows {
            let act = a.policy.act_batch(one_row(&row.state), one_row(&row.goal)).unwrap();
            row.action = act.row(0).to_vec();
        }
        let terms = a.joint_objective(&batch, 3.0).unwrap().terms(&a.policy.actor).unwrap();
        assert_eq!(terms.sl_term, 0.0);
    }

    #[test]
    fn alpha_zero_ignores_critic_level() {
        let a = agent(14, AgentConfig::default());
        let env = a.env.clone();
        let batch = random_batch(&env, 16, 15);
        let mut shifted = a.clone();
        let last = shifted.critic.num_layers() - 1;
        shifted.critic.bias_mut(last)[0] += 123.25;

        let mut x = a.clone();
        let mut y = shifted;
        for _ in 0..3 {
            x.actor_update_joint(&batch, 0.0).unwrap();
            y.actor_update_joint(&batch, 0.0).unwrap();
        }
        for (p, q) in x.policy.actor.params().iter().zip(y.policy.actor.params()) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
    }

    #[test]
    fn alpha_zero_matches_plain_policy_gradient() {
        let a = agent(16, AgentConfig::default());
        let env = a.env.clone();
        let relabeled = random_batch(&env, 16, 17);
        let mut plain = relabeled.clone();
        plain.sl_mask.fill(false);
        let mut x = a.clone();
        let mut y = a;
        let tx = x.actor_update_joint(&relabeled, 0.0).unwrap();
        let ty = y.actor_update_joint(&plain, 0.0).unwrap();
        assert_eq!(tx.q_term, ty.q_term);
        assert_eq!(x.policy.actor, y.policy.actor);
    }

    #[test]
    fn targets_move_only_through_polyak() {
        let mut a = agent(18, AgentConfig::default());
        let env = a.env.clone();
        let batch = random_batch(&env, 16, 19);
        let (ta, tc) = (a.target_actor.clone(), a.target_critic.clone());
        a.critic_update(&batch).unwrap();
        a.actor_update_joint(&batch, 3.0).unwrap();
        assert_eq!(a.target_actor, ta);
        assert_eq!(a.target_critic, tc);
        a.update_targets().unwrap();
        for ((t, o), old) in a
            .target_critic
            .params()
            .iter()
            .zip(a.critic.params())
            .zip(tc.params())
        {
            assert!((t - (0.9 * old + 0.1 * o)).abs() < 1e-15);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut a = agent(20, AgentConfig::default());
        let env = a.env.clone();
        let batch = random_batch(&env, 16, 21);
        let arrays = BatchArrays::from_rows(&batch.rows, &env);
        a.observe(arrays.states.view(), arrays.goals.view()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let b = ActorCritic::load(dir.path(), &env).unwrap();
        assert_eq!(b.policy.actor, a.policy.actor);
        assert_eq!(b.critic, a.critic);
        assert_eq!(b.target_critic, a.target_critic);
        assert_eq!(b.policy.normalizer, a.policy.normalizer);
        assert_eq!(b.config, a.config);
    }
}
