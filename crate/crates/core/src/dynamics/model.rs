use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::envs::GoalEnvSpec;
use crate::error::{ensure, Result};
use crate::nn::{adam_step, backward, check_finite, mean_squared_norm, MseLoss, Objective, OutputActivation};
use crate::normalizer::RunningNormalizer;
use crate::{AdamState, Mlp};

/// Anything that maps a batch of `(state, action)` rows to next states.
pub trait TransitionModel {
    fn predict_next_batch(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>>;
}

/// Learned delta-state model: `s' = s + m(normalize(s, a))`.
#[derive(Debug, Clone)]
pub struct DynamicsModel {
    net: Mlp,
    adam: AdamState,
    normalizer: RunningNormalizer,
    state_dim: usize,
    action_dim: usize,
    learning_rate: f64,
    normalize_inputs: bool,
    train_steps: u64,
}

impl DynamicsModel {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim);
        let net = Mlp::new(&sizes, OutputActivation::Identity, rng)?;
        Ok(Self::from_network(net, state_dim, action_dim, learning_rate))
    }

    /// Wraps an existing network whose output width is `state_dim`.
    pub fn from_network(net: Mlp, state_dim: usize, action_dim: usize, learning_rate: f64) -> Self {
        let adam = AdamState::new(&net);
        Self {
            net,
            adam,
            normalizer: RunningNormalizer::new(state_dim + action_dim, 5.0),
            state_dim,
            action_dim,
            learning_rate,
            normalize_inputs: true,
            train_steps: 0,
        }
    }

    pub fn for_env<R: Rng + ?Sized>(
        env: &GoalEnvSpec,
        hidden: &[usize],
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(env.state_dim, env.action_dim, hidden, learning_rate, rng)
    }

    pub fn without_input_normalization(mut self) -> Self {
        self.normalize_inputs = false;
        self
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn normalizer(&self) -> &RunningNormalizer {
        &self.normalizer
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    fn raw_inputs(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        ensure!(
            states.ncols() == self.state_dim && actions.ncols() == self.action_dim,
            Shape,
            "model expects {}-d states and {}-d actions, got {} and {}",
            self.state_dim,
            self.action_dim,
            states.ncols(),
            actions.ncols()
        );
        ensure!(
            states.nrows() == actions.nrows(),
            Shape,
            "{} states vs {} actions",
            states.nrows(),
            actions.nrows()
        );
        Ok(concatenate(Axis(1), &[states, actions]).expect("row counts checked"))
    }

    fn network_inputs(&self, raw: Array2<f64>) -> Array2<f64> {
        if self.normalize_inputs {
            self.normalizer.normalize(raw.view())
        } else {
            raw
        }
    }

    pub fn predict_delta(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        let inputs = self.network_inputs(self.raw_inputs(states, actions)?);
        self.net.forward(inputs.view())
    }

    pub fn predict_next(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let s = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|e| crate::Error::Shape(e.to_string()))?;
        let a = ArrayView2::from_shape((1, action.len()), action)
            .map_err(|e| crate::Error::Shape(e.to_string()))?;
        Ok(self.predict_next_batch(s, a)?.row(0).to_vec())
    }

    /// Mean `‖(s' − s) − m(s, a)‖²` without touching any state.
    pub fn loss(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
        next_states: ArrayView2<'_, f64>,
    ) -> Result<f64> {
        let predicted = self.predict_next_batch(states, actions)?;
        Ok(mean_squared_norm((&predicted - &next_states).view()))
    }

    /// The delta-regression objective on one batch, with input statistics frozen.
    pub fn objective(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
        next_states: ArrayView2<'_, f64>,
    ) -> Result<MseLoss<f64>> {
        ensure!(
            next_states.dim() == states.dim(),
            Shape,
            "next states {:?} vs states {:?}",
            next_states.dim(),
            states.dim()
        );
        let inputs = self.network_inputs(self.raw_inputs(states, actions)?);
        MseLoss::new(inputs, &next_states - &states)
    }

    /// Refreshes input statistics with the batch, then takes one Adam step.
    /// Returns the loss before the step.
    pub fn train_step(
        &mut self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
        next_states: ArrayView2<'_, f64>,
    ) -> Result<f64> {
        check_finite("model training states", states)?;
        check_finite("model training actions", actions)?;
        check_finite("model training next states", next_states)?;
        if self.normalize_inputs {
            let raw = self.raw_inputs(states, actions)?;
            self.normalizer.update(raw.view())?;
        }
        let objective = self.objective(states, actions, next_states)?;
        let (loss, grads) = backward(&self.net, &objective)?;
        adam_step(&mut self.net, &grads, &mut self.adam, self.learning_rate)?;
        self.train_steps += 1;
        Ok(loss)
    }

    /// Loss value of [`DynamicsModel::objective`] under the current parameters.
    pub fn objective_value(&self, objective: &MseLoss<f64>) -> Result<f64> {
        objective.value(&self.net)
    }
}

impl TransitionModel for DynamicsModel {
    fn predict_next_batch(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        let delta = self.predict_delta(states, actions)?;
        Ok(&states + &delta)
    }
}

/// The environment's own transition function, for checking model-based code
/// paths against ground truth.
#[derive(Debug, Clone, Copy)]
pub struct OracleModel<'a> {
    pub env: &'a GoalEnvSpec,
}

impl TransitionModel for OracleModel<'_> {
    fn predict_next_batch(
        &self,
        states: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(states.raw_dim());
        for ((s, a), mut o) in states
            .rows()
            .into_iter()
            .zip(actions.rows())
            .zip(out.rows_mut())
        {
            let mut action = a.to_vec();
            self.env.clip_action(&mut action);
            let next = self.env.transition(&s.to_vec(), &action)?;
            o.assign(&ndarray::ArrayView1::from(&next));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interior_batch(n: usize, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let s = Array2::from_shape_fn((n, 2), |_| rng.random_range(-3.9..3.9));
        let a = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..=1.0));
        let next = &s + &a;
        (s, a, next)
    }

    #[test]
    fn additive_prediction_rule() {
        let mut net = Mlp::zeros(&[4, 2], OutputActivation::Identity).unwrap();
        net.bias_mut(0).copy_from_slice(&[0.3, 0.3]);
        let model = DynamicsModel::from_network(net, 2, 2, 1e-3);
        assert_eq!(model.predict_next(&[0.0, 0.0], &[0.5, 0.5]).unwrap(), vec![0.3, 0.3]);

        let zero = DynamicsModel::from_network(
            Mlp::zeros(&[4, 2], OutputActivation::Identity).unwrap(),
            2,
            2,
            1e-3,
        );
        assert_eq!(zero.predict_next(&[1.5, -2.0], &[0.5, 0.5]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn exact_model_has_zero_loss_and_stays_put() {
        // Linear network m(s, a) = a, exact on interior point transitions.
        let mut net = Mlp::zeros(&[4, 2], OutputActivation::Identity).unwrap();
        net.weights_mut(0)[[0, 2]] = 1.0;
        net.weights_mut(0)[[1, 3]] = 1.0;
        let mut model = DynamicsModel::from_network(net.clone(), 2, 2, 1e-3)
            .without_input_normalization();
        let s = array![[0.0, 1.0], [2.0, -3.0]];
        let a = array![[0.5, -0.5], [-1.0, 0.25]];
        let next = &s + &a;
        let loss = model.train_step(s.view(), a.view(), next.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(model.network(), &net);
    }

    #[test]
    fn learns_point_dynamics() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = DynamicsModel::new(2, 2, &[64, 64], 1e-3, &mut rng).unwrap();
        for _ in 0..200 {
            let (s, a, next) = interior_batch(256, &mut rng);
            let loss = model.train_step(s.view(), a.view(), next.view()).unwrap();
            assert!(loss >= 0.0);
        }
        let (s, a, next) = interior_batch(1000, &mut rng);
        let mse = model.loss(s.view(), a.view(), next.view()).unwrap();
        assert!(mse < 1e-3, "held-out mse {mse}");
    }

    #[test]
    fn loss_shrinks_on_fixed_batch() {
        let mut finals = Vec::new();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = DynamicsModel::new(2, 2, &[32, 32], 1e-3, &mut rng).unwrap();
            let (s, a, next) = interior_batch(64, &mut rng);
            let first = model.train_step(s.view(), a.view(), next.view()).unwrap();
            let mut last = first;
            for _ in 0..49 {
                last = model.train_step(s.view(), a.view(), next.view()).unwrap();
            }
            finals.push(last / first);
        }
        finals.sort_by(f64::total_cmp);
        assert!(finals[2] < 1.0, "{finals:?}");
    }

    #[test]
    fn oracle_matches_environment() {
        let env = GoalEnvSpec::new(EnvKind::Point2DLarge);
        let oracle = OracleModel { env: &env };
        let s = array![[4.8, 0.0], [0.0, 0.0]];
        let a = array![[1.0, 0.0], [0.5, -0.5]];
        let next = oracle.predict_next_batch(s.view(), a.view()).unwrap();
        assert_eq!(next, array![[5.0, 0.0], [0.5, -0.5]]);
    }
}
