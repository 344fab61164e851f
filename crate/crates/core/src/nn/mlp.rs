//! Fully connected ReLU networks stored as one flat parameter vector.
//!
//! Layer `l` occupies `out_l * in_l` row-major weights (`[out][in]`) followed
//! by `out_l` biases. Adam, Polyak averaging, gradient checks and checkpoints
//! all operate on the flat vector directly.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::scalar::{lit, Scalar};
use crate::error::{ensure, Error, Result};

/// Activation applied to the last layer.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputActivation<T> {
    Identity,
    /// `center + half_range * tanh(z)`, shrunk by a few ulps so the result is
    /// strictly inside `[low, high]` even when `tanh` saturates.
    Squash { low: Vec<T>, high: Vec<T> },
}

impl<T: Scalar> OutputActivation<T> {
    pub fn squash(low: Vec<T>, high: Vec<T>) -> Result<Self> {
        ensure!(
            low.len() == high.len(),
            Shape,
            "squash bounds have {} lows and {} highs",
            low.len(),
            high.len()
        );
        ensure!(
            low.iter().zip(&high).all(|(l, h)| l < h),
            InvalidArgument,
            "squash box must satisfy low < high"
        );
        Ok(OutputActivation::Squash { low, high })
    }

    fn shrink() -> T {
        T::one() - lit::<T>(2.0) * T::epsilon()
    }
}

/// A multilayer perceptron with ReLU hidden units.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    layer_sizes: Vec<usize>,
    params: Vec<T>,
    output: OutputActivation<T>,
}

/// Per-parameter partial derivatives, laid out exactly like [`MlpModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    layer_sizes: Vec<usize>,
    values: Vec<T>,
}

/// Intermediate values of a forward pass, needed for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// `activations[0]` is the input; `activations[l]` is the post-activation of layer `l`.
    activations: Vec<Array2<T>>,
    /// Pre-activation of every layer.
    pre_activations: Vec<Array2<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Array2<T> {
        self.activations.last().expect("trace holds at least the input")
    }

    pub fn into_output(mut self) -> Array2<T> {
        self.activations.pop().expect("trace holds at least the input")
    }
}

fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    ensure!(
        layer_sizes.len() >= 2,
        Shape,
        "need at least an input and an output layer, got {:?}",
        layer_sizes
    );
    ensure!(
        layer_sizes.iter().all(|&n| n > 0),
        Shape,
        "layer sizes must be positive, got {:?}",
        layer_sizes
    );
    Ok(())
}

impl<T: Scalar> MlpModel<T> {
    /// Random initialisation: weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        output: OutputActivation<T>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes, output)?;
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new(-bound, bound).expect("finite positive bound");
            for p in &mut model.params[offset..offset + fan_in * fan_out] {
                *p = lit(dist.sample(rng));
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(model)
    }

    /// All parameters zero.
    pub fn zeros(layer_sizes: &[usize], output: OutputActivation<T>) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        if let OutputActivation::Squash { low, .. } = &output {
            ensure!(
                low.len() == *layer_sizes.last().unwrap(),
                Shape,
                "squash box has {} dims but the output layer has {}",
                low.len(),
                layer_sizes.last().unwrap()
            );
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![T::zero(); param_count(layer_sizes)],
            output,
        })
    }

    pub fn from_params(
        layer_sizes: &[usize],
        output: OutputActivation<T>,
        params: Vec<T>,
    ) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes, output)?;
        ensure!(
            params.len() == model.params.len(),
            Shape,
            "expected {} parameters, got {}",
            model.params.len(),
            params.len()
        );
        model.params = params;
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn output_activation(&self) -> &OutputActivation<T> {
        &self.output
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Offset of layer `l`'s weights in the flat vector and its `(out, in)` shape.
    fn layer_layout(&self, layer: usize) -> (usize, usize, usize) {
        let mut offset = 0;
        for w in self.layer_sizes.windows(2).take(layer) {
            offset += w[0] * w[1] + w[1];
        }
        (offset, self.layer_sizes[layer + 1], self.layer_sizes[layer])
    }

    /// Weight matrix of layer `l`, shaped `(out, in)`.
    pub fn weights(&self, layer: usize) -> ArrayView2<'_, T> {
        let (offset, out, inp) = self.layer_layout(layer);
        ArrayView2::from_shape((out, inp), &self.params[offset..offset + out * inp])
            .expect("layout is consistent")
    }

    pub fn weights_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, T> {
        let (offset, out, inp) = self.layer_layout(layer);
        ArrayViewMut2::from_shape((out, inp), &mut self.params[offset..offset + out * inp])
            .expect("layout is consistent")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, T> {
        let (offset, out, inp) = self.layer_layout(layer);
        let start = offset + out * inp;
        ArrayView1::from(&self.params[start..start + out])
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [T] {
        let (offset, out, inp) = self.layer_layout(layer);
        let start = offset + out * inp;
        &mut self.params[start..start + out]
    }

    fn check_input(&self, input: &ArrayView2<'_, T>) -> Result<()> {
        ensure!(
            input.ncols() == self.input_dim(),
            Shape,
            "input width {} does not match network input {}",
            input.ncols(),
            self.input_dim()
        );
        Ok(())
    }

    fn affine(&self, layer: usize, input: &ArrayView2<'_, T>) -> Array2<T> {
        let w = self.weights(layer);
        let mut z = Array2::zeros((input.nrows(), w.nrows()));
        general_mat_mul(T::one(), input, &w.t(), T::zero(), &mut z);
        z += &self.bias(layer);
        z
    }

    fn apply_output(&self, z: &Array2<T>) -> Array2<T> {
        match &self.output {
            OutputActivation::Identity => z.clone(),
            OutputActivation::Squash { low, high } => {
                let shrink = OutputActivation::<T>::shrink();
                let half: T = lit(0.5);
                let mut out = z.clone();
                for mut row in out.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let center = (high[j] + low[j]) * half;
                        let range = (high[j] - low[j]) * half;
                        *v = center + range * shrink * v.tanh();
                    }
                }
                out
            }
        }
    }

    /// Batched forward pass; one row per sample.
    pub fn forward(&self, input: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_input(&input)?;
        let layers = self.num_layers();
        let mut act = self.affine(0, &input);
        for layer in 1..layers {
            act.mapv_inplace(relu);
            act = self.affine(layer, &act.view());
        }
        Ok(self.apply_output(&act))
    }

    /// Forward pass that keeps every intermediate for [`MlpModel::backprop`].
    pub fn forward_trace(&self, input: ArrayView2<'_, T>) -> Result<Trace<T>> {
        self.check_input(&input)?;
        let layers = self.num_layers();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut pre_activations = Vec::with_capacity(layers);
        activations.push(input.to_owned());
        for layer in 0..layers {
            let z = self.affine(layer, &activations[layer].view());
            let a = if layer + 1 == layers {
                self.apply_output(&z)
            } else {
                z.mapv(relu)
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(Trace {
            activations,
            pre_activations,
        })
    }

    /// Reverse-mode pass: given `d loss / d output` for every row, returns the
    /// parameter gradient and `d loss / d input`.
    pub fn backprop(
        &self,
        trace: &Trace<T>,
        d_output: ArrayView2<'_, T>,
    ) -> Result<(Gradients<T>, Array2<T>)> {
        let layers = self.num_layers();
        ensure!(
            trace.pre_activations.len() == layers,
            Shape,
            "trace has {} layers, network has {}",
            trace.pre_activations.len(),
            layers
        );
        ensure!(
            d_output.dim() == trace.output().dim(),
            Shape,
            "output gradient shape {:?} does not match output {:?}",
            d_output.dim(),
            trace.output().dim()
        );

        let mut grads = Gradients::zeros_like(self);
        let mut dz = d_output.to_owned();
        if let OutputActivation::Squash { low, high } = &self.output {
            let shrink = OutputActivation::<T>::shrink();
            let half: T = lit(0.5);
            let z = &trace.pre_activations[layers - 1];
            Zip::indexed(&mut dz).and(z).for_each(|(_, j), d, &zv| {
                let range = (high[j] - low[j]) * half;
                let t = zv.tanh();
                *d = *d * range * shrink * (T::one() - t * t);
            });
        }

        for layer in (0..layers).rev() {
            let input = &trace.activations[layer];
            let (offset, out, inp) = self.layer_layout(layer);
            {
                let (w_slice, rest) = grads.values[offset..].split_at_mut(out * inp);
                let mut dw = ArrayViewMut2::from_shape((out, inp), w_slice)
                    .expect("layout is consistent");
                general_mat_mul(T::one(), &dz.t(), input, T::zero(), &mut dw);
                for (b, col) in rest[..out].iter_mut().zip(dz.axis_iter(Axis(1))) {
                    *b = col.sum();
                }
            }
            let w = self.weights(layer);
            let mut d_in = Array2::zeros((dz.nrows(), inp));
            general_mat_mul(T::one(), &dz, &w, T::zero(), &mut d_in);
            if layer == 0 {
                return Ok((grads, d_in));
            }
            Zip::from(&mut d_in)
                .and(&trace.pre_activations[layer - 1])
                .for_each(|d, &z| {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                });
            dz = d_in;
        }
        unreachable!("loop returns at layer 0")
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(model: &MlpModel<T>) -> Self {
        Self {
            layer_sizes: model.layer_sizes.clone(),
            values: vec![T::zero(); model.params.len()],
        }
    }

    pub fn from_values(model: &MlpModel<T>, values: Vec<T>) -> Result<Self> {
        ensure!(
            values.len() == model.params.len(),
            Shape,
            "expected {} gradient entries, got {}",
            model.params.len(),
            values.len()
        );
        Ok(Self {
            layer_sizes: model.layer_sizes.clone(),
            values,
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn is_congruent(&self, model: &MlpModel<T>) -> bool {
        self.layer_sizes == model.layer_sizes && self.values.len() == model.params.len()
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.values {
            *v = *v * factor;
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients<T>, factor: T) -> Result<()> {
        ensure!(
            self.layer_sizes == other.layer_sizes,
            Shape,
            "gradient layouts differ: {:?} vs {:?}",
            self.layer_sizes,
            other.layer_sizes
        );
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + b * factor;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Fails with [`Error::Numerical`] if any input entry is NaN or infinite.
pub fn check_finite<T: Scalar>(what: &str, values: ArrayView2<'_, T>) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite value in {what}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_seed_same_parameters() {
        let a = MlpModel::<f64>::new(
            &[2, 4, 1],
            OutputActivation::Identity,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let b = MlpModel::<f64>::new(
            &[2, 4, 1],
            OutputActivation::Identity,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(a.params(), b.params());
        assert!(a.params().iter().any(|&p| p != 0.0));
    }

    #[test]
    fn rejects_degenerate_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(MlpModel::<f64>::new(&[2], OutputActivation::Identity, &mut rng).is_err());
        assert!(MlpModel::<f64>::new(&[], OutputActivation::Identity, &mut rng).is_err());
        assert!(MlpModel::<f64>::new(&[2, 0, 1], OutputActivation::Identity, &mut rng).is_err());
    }

    #[test]
    fn shapes_chain() {
        let model = MlpModel::<f64>::new(
            &[2, 256, 256, 256, 2],
            OutputActivation::squash(vec![-1.0; 2], vec![1.0; 2]).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(model.num_layers(), 4);
        assert_eq!(model.weights(0).dim(), (256, 2));
        assert_eq!(model.weights(1).dim(), (256, 256));
        assert_eq!(model.weights(3).dim(), (2, 256));
        assert_eq!(model.bias(3).len(), 2);
        assert_eq!(
            model.params().len(),
            2 * 256 + 256 + 2 * (256 * 256 + 256) + 256 * 2 + 2
        );
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut model = MlpModel::<f64>::zeros(&[3, 5, 2], OutputActivation::Identity).unwrap();
        model.bias_mut(1).copy_from_slice(&[0.25, -1.5]);
        let out = model.forward(Array2::from_elem((4, 3), 7.0).view()).unwrap();
        for row in out.rows() {
            assert_eq!(row.to_vec(), vec![0.25, -1.5]);
        }
    }

    #[test]
    fn identity_single_layer() {
        let mut model = MlpModel::<f64>::zeros(&[3, 3], OutputActivation::Identity).unwrap();
        for i in 0..3 {
            model.weights_mut(0)[[i, i]] = 1.0;
        }
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -0.25]];
        assert_eq!(model.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn squash_stays_strictly_inside_box() {
        let mut model = MlpModel::<f64>::new(
            &[2, 8, 2],
            OutputActivation::squash(vec![-1.0; 2], vec![1.0; 2]).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        for p in model.params_mut() {
            *p *= 1e3;
        }
        let x = array![[100.0, -100.0], [-50.0, 80.0], [0.0, 0.0]];
        let out = model.forward(x.view()).unwrap();
        assert!(out.iter().all(|&v| v > -1.0 && v < 1.0), "{out:?}");
    }

    #[test]
    fn width_mismatch_rejected() {
        let model = MlpModel::<f64>::zeros(&[3, 2], OutputActivation::Identity).unwrap();
        assert!(matches!(
            model.forward(Array2::zeros((1, 2)).view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn f32_engine_runs() {
        let model = MlpModel::<f32>::new(
            &[2, 16, 1],
            OutputActivation::Identity,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let out = model.forward(Array2::from_elem((3, 2), 0.5f32).view()).unwrap();
        assert_eq!(out.dim(), (3, 1));
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
