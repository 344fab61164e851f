use super::mlp::{Gradients, MlpModel};
use super::scalar::{lit, Scalar};
use crate::error::{ensure, Result};

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    first_moment: Vec<T>,
    second_moment: Vec<T>,
    step: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed accumulators with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(model: &MlpModel<T>) -> Self {
        Self::with_hyperparameters(model, lit(0.9), lit(0.999), lit(1e-8))
    }

    pub fn with_hyperparameters(model: &MlpModel<T>, beta1: T, beta2: T, epsilon: T) -> Self {
        let n = model.params().len();
        Self {
            first_moment: vec![T::zero(); n],
            second_moment: vec![T::zero(); n],
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[T] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[T] {
        &self.second_moment
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step<T: Scalar>(
    model: &mut MlpModel<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    learning_rate: T,
) -> Result<()> {
    ensure!(
        grads.is_congruent(model),
        Shape,
        "gradient layout does not match the model"
    );
    ensure!(
        state.first_moment.len() == model.params().len(),
        Shape,
        "optimizer state sized for {} parameters, model has {}",
        state.first_moment.len(),
        model.params().len()
    );
    ensure!(
        learning_rate > T::zero(),
        InvalidArgument,
        "learning rate must be positive"
    );

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bias1 = T::one() - b1.powi(t);
    let bias2 = T::one() - b2.powi(t);
    for (((p, &g), m), v) in model
        .params_mut()
        .iter_mut()
        .zip(grads.values())
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p = *p - learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// `target ← coefficient · target + (1 − coefficient) · online`, parameter-wise.
pub fn polyak_update<T: Scalar>(
    target: &mut MlpModel<T>,
    online: &MlpModel<T>,
    coefficient: T,
) -> Result<()> {
    ensure!(
        coefficient >= T::zero() && coefficient <= T::one(),
        InvalidArgument,
        "polyak coefficient {} outside [0, 1]",
        coefficient
    );
    ensure!(
        target.layer_sizes() == online.layer_sizes(),
        Shape,
        "target {:?} and online {:?} layouts differ",
        target.layer_sizes(),
        online.layer_sizes()
    );
    let keep = T::one() - coefficient;
    for (t, &o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = coefficient * *t + keep * o;
    }
    Ok(())
}
