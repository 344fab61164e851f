//! Scalar training objectives and the finite-difference gradient checker.

use ndarray::{Array2, ArrayView2};

use super::mlp::{check_finite, Gradients, MlpModel};
use super::scalar::{lit, Scalar};
use crate::error::{ensure, Error, Result};

/// A scalar loss over a fixed batch, differentiable with respect to one network.
///
/// Every other network the loss touches (a frozen critic, a target copy) is
/// captured inside the implementor and treated as constant.
pub trait Objective<T: Scalar> {
    fn value(&self, model: &MlpModel<T>) -> Result<T>;

    fn value_and_grad(&self, model: &MlpModel<T>) -> Result<(T, Gradients<T>)>;
}

/// Evaluates `objective` and its exact gradient, refusing non-finite inputs or results.
pub fn backward<T: Scalar, O: Objective<T> + ?Sized>(
    model: &MlpModel<T>,
    objective: &O,
) -> Result<(T, Gradients<T>)> {
    if !model.all_finite() {
        return Err(Error::Numerical("non-finite model parameter".into()));
    }
    let (loss, grads) = objective.value_and_grad(model)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("loss evaluated to {loss}")));
    }
    if !grads.all_finite() {
        return Err(Error::Numerical("non-finite gradient entry".into()));
    }
    Ok((loss, grads))
}

/// Relative errors below this denominator are measured in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)` over all
/// parameters, with the numeric gradient from central differences of step `h`.
pub fn grad_check<T: Scalar, O: Objective<T> + ?Sized>(
    model: &MlpModel<T>,
    objective: &O,
    h: T,
) -> Result<T> {
    let (_, grads) = backward(model, objective)?;
    grad_check_against(model, objective, &grads, h)
}

/// Same as [`grad_check`] but against a caller-supplied gradient.
pub fn grad_check_against<T: Scalar, O: Objective<T> + ?Sized>(
    model: &MlpModel<T>,
    objective: &O,
    grads: &Gradients<T>,
    h: T,
) -> Result<T> {
    ensure!(h > T::zero(), InvalidArgument, "finite-difference step must be positive");
    ensure!(
        grads.is_congruent(model),
        Shape,
        "gradient layout does not match the model"
    );
    let two: T = lit(2.0);
    let floor: T = lit(GRAD_CHECK_FLOOR);
    let mut probe = model.clone();
    let mut worst = T::zero();
    for (i, &analytic) in grads.values().iter().enumerate() {
        let original = probe.params()[i];
        probe.params_mut()[i] = original + h;
        let plus = objective.value(&probe)?;
        probe.params_mut()[i] = original - h;
        let minus = objective.value(&probe)?;
        probe.params_mut()[i] = original;
        let numeric = (plus - minus) / (two * h);
        let denom = analytic.abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Mean over rows of the squared Euclidean norm `‖target − model(input)‖²`.
#[derive(Debug, Clone)]
pub struct MseLoss<T> {
    pub inputs: Array2<T>,
    pub targets: Array2<T>,
}

impl<T: Scalar> MseLoss<T> {
    pub fn new(inputs: Array2<T>, targets: Array2<T>) -> Result<Self> {
        ensure!(
            inputs.nrows() == targets.nrows() && inputs.nrows() > 0,
            Shape,
            "{} input rows vs {} target rows",
            inputs.nrows(),
            targets.nrows()
        );
        check_finite("loss inputs", inputs.view())?;
        check_finite("loss targets", targets.view())?;
        Ok(Self { inputs, targets })
    }

    fn residual(&self, prediction: &Array2<T>) -> Result<Array2<T>> {
        ensure!(
            prediction.dim() == self.targets.dim(),
            Shape,
            "prediction shape {:?} vs target shape {:?}",
            prediction.dim(),
            self.targets.dim()
        );
        Ok(prediction - &self.targets)
    }
}

impl<T: Scalar> Objective<T> for MseLoss<T> {
    fn value(&self, model: &MlpModel<T>) -> Result<T> {
        let prediction = model.forward(self.inputs.view())?;
        let residual = self.residual(&prediction)?;
        Ok(mean_squared_norm(residual.view()))
    }

    fn value_and_grad(&self, model: &MlpModel<T>) -> Result<(T, Gradients<T>)> {
        let trace = model.forward_trace(self.inputs.view())?;
        let residual = self.residual(trace.output())?;
        let loss = mean_squared_norm(residual.view());
        let scale: T = lit::<T>(2.0) / T::from_usize(residual.nrows()).unwrap();
        let d_out = residual.mapv(|r| r * scale);
        let (grads, _) = model.backprop(&trace, d_out.view())?;
        Ok((loss, grads))
    }
}

/// `mean_rows Σ_cols x²`.
pub fn mean_squared_norm<T: Scalar>(residual: ArrayView2<'_, T>) -> T {
    if residual.nrows() == 0 {
        return T::zero();
    }
    let total = residual.iter().fold(T::zero(), |acc, &r| acc + r * r);
    total / T::from_usize(residual.nrows()).unwrap()
}
