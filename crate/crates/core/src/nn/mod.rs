//! Minimal dense feed-forward network engine.
//!
//! Supports MLPs with a single hidden activation (ReLU or GELU) and a linear
//! output layer, reverse-mode gradients for batched inputs, and Adam with a
//! step learning-rate schedule. Everything is `f64` and single-threaded; a
//! parameter set is owned by one training loop at a time.

mod adam;

pub use adam::{AdamState, StepSchedule};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;

thread_local! {
    static FORWARD_CALLS: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Number of batched forward passes issued on this thread so far. Sampling
/// cost contracts (one pass per GCDS draw batch, T passes per diffusion
/// chain) are asserted against this counter.
pub fn forward_calls() -> u64 {
    FORWARD_CALLS.with(std::cell::Cell::get)
}

/// Hidden-layer activation. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => relu(x),
            Activation::Gelu => gelu(x),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => gelu_derivative(x),
        }
    }
}

/// `max(0, x)`.
#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Gaussian-CDF form `x * Phi(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

#[inline]
fn gelu_derivative(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

#[inline]
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

#[inline]
pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Architecture of an MLP: layer widths and the hidden activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_widths: &[usize],
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_widths.contains(&0) {
            return Err(Error::Config("all layer widths must be >= 1".into()));
        }
        Ok(MlpSpec {
            input_dim,
            hidden_widths: hidden_widths.to_vec(),
            output_dim,
            activation,
        })
    }

    /// Widths including input and output: `[input, h1, ..., output]`.
    fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_widths.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden_widths);
        d.push(self.output_dim);
        d
    }

    fn n_layers(&self) -> usize {
        self.hidden_widths.len() + 1
    }
}

/// Weights and biases of an MLP. `weights[l]` has shape `(in_l, out_l)` so a
/// batch row multiplies from the left.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let dims = spec.dims();
        let mut weights = Vec::with_capacity(spec.n_layers());
        let mut biases = Vec::with_capacity(spec.n_layers());
        for l in 0..spec.n_layers() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Matrix::zeros(fan_in, fan_out);
            for v in w.data_mut() {
                *v = rng.random_range(-limit..limit);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        MlpParams { spec, weights, biases }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let dims = spec.dims();
        let weights = (0..spec.n_layers())
            .map(|l| Matrix::zeros(dims[l], dims[l + 1]))
            .collect();
        let biases = (0..spec.n_layers()).map(|l| vec![0.0; dims[l + 1]]).collect();
        MlpParams { spec, weights, biases }
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::Dimension(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Batched forward pass.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        let mut scratch = InferenceScratch::default();
        self.forward_reusing(batch, &mut scratch)?;
        Ok(scratch.output().clone())
    }

    /// Inference-only forward pass into reusable buffers; avoids the
    /// per-call allocations of `forward_cached`. Hot path for iterative
    /// samplers that evaluate the same network thousands of times.
    pub fn forward_reusing(&self, batch: &Matrix, scratch: &mut InferenceScratch) -> Result<()> {
        FORWARD_CALLS.with(|c| c.set(c.get() + 1));
        self.check_batch(batch)?;
        let n_layers = self.spec.n_layers();
        let dims = self.spec.dims();
        let n = batch.rows();
        scratch.layers.resize_with(n_layers, || Matrix::zeros(0, 0));
        for l in 0..n_layers {
            if scratch.layers[l].rows() != n || scratch.layers[l].cols() != dims[l + 1] {
                scratch.layers[l] = Matrix::zeros(n, dims[l + 1]);
            }
            let (before, rest) = scratch.layers.split_at_mut(l);
            let input: &Matrix = if l == 0 { batch } else { &before[l - 1] };
            let out = &mut rest[0];
            out.fill_rows(&self.biases[l]);
            out.accumulate_matmul(input, &self.weights[l]);
            if l + 1 < n_layers {
                out.map_in_place(|x| self.spec.activation.apply(x));
            }
        }
        Ok(())
    }

    /// Forward pass retaining per-layer pre-activations for `backward`.
    pub fn forward_cached(&self, batch: &Matrix) -> Result<ForwardCache> {
        FORWARD_CALLS.with(|c| c.set(c.get() + 1));
        self.check_batch(batch)?;
        let n_layers = self.spec.n_layers();
        let mut activations: Vec<Matrix> = Vec::with_capacity(n_layers + 1);
        let mut preacts: Vec<Matrix> = Vec::with_capacity(n_layers.saturating_sub(1));
        activations.push(batch.clone());
        for l in 0..n_layers {
            let mut z = activations[l].matmul(&self.weights[l])?;
            z.add_row_vector(&self.biases[l]);
            if l + 1 < n_layers {
                let mut a = z.clone();
                a.map_in_place(|x| self.spec.activation.apply(x));
                preacts.push(z);
                activations.push(a);
            } else {
                activations.push(z);
            }
        }
        Ok(ForwardCache { activations, preacts })
    }

    /// Reverse-mode gradients of `sum(output .* upstream)` with respect to
    /// every parameter and to the batch itself.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<MlpGrads> {
        let n_layers = self.spec.n_layers();
        let out = cache.output();
        if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
            return Err(Error::Dimension(format!(
                "upstream gradient is {}x{}, output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let mut d_weights = vec![Matrix::zeros(0, 0); n_layers];
        let mut d_biases = vec![Vec::new(); n_layers];

        // Output layer is linear, so the first delta is the upstream itself.
        let mut delta = upstream.clone();
        for l in (0..n_layers).rev() {
            d_weights[l] = cache.activations[l].transpose_matmul(&delta)?;
            d_biases[l] = delta.col_sums();
            let mut d_prev = delta.matmul_transpose(&self.weights[l])?;
            if l > 0 {
                let z = &cache.preacts[l - 1];
                for (g, &zv) in d_prev.data_mut().iter_mut().zip(z.data()) {
                    *g *= self.spec.activation.derivative(zv);
                }
            }
            delta = d_prev;
        }
        Ok(MlpGrads {
            weights: d_weights,
            biases: d_biases,
            input: delta,
        })
    }
}

/// Reusable buffers for [`MlpParams::forward_reusing`].
#[derive(Default)]
pub struct InferenceScratch {
    layers: Vec<Matrix>,
}

impl InferenceScratch {
    /// Output of the last forward pass.
    pub fn output(&self) -> &Matrix {
        self.layers.last().expect("forward_reusing ran at least once")
    }
}

/// Cached intermediates from a forward pass.
pub struct ForwardCache {
    /// `activations[0]` is the batch; `activations[l]` the output of layer `l`.
    activations: Vec<Matrix>,
    /// Pre-activation values of each hidden layer.
    preacts: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds at least the input")
    }

    /// Hidden-layer pre-activation values, one matrix per hidden layer.
    /// Finite-difference gradient checks use these to reject probe windows
    /// that straddle a ReLU kink, where the difference quotient is not a
    /// valid derivative oracle.
    pub fn preactivations(&self) -> &[Matrix] {
        &self.preacts
    }
}

/// Parameter gradients plus the gradient with respect to the input batch
/// (needed when one network feeds another, as in adversarial training).
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub input: Matrix,
}

impl MlpGrads {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Flips the sign of every parameter gradient (gradient ascent).
    pub fn negate(&mut self) {
        for w in &mut self.weights {
            w.scale(-1.0);
        }
        for b in &mut self.biases {
            for v in b {
                *v = -*v;
            }
        }
    }
}

/// Shuffled mini-batch index partition for one epoch.
pub fn minibatch_partition(n: usize, batch_size: usize, rng: &mut crate::rng::Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let bs = batch_size.max(1);
    idx.chunks(bs).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson_normal_cdf(x: f64) -> f64 {
        // Quadrature oracle for Phi(x), independent of the erf implementation.
        let (lo, n) = (-12.0f64, 40_000usize);
        let h = (x - lo) / n as f64;
        let f = |t: f64| normal_pdf(t);
        let mut acc = f(lo) + f(x);
        for i in 1..n {
            let t = lo + i as f64 * h;
            acc += if i % 2 == 0 { 2.0 * f(t) } else { 4.0 * f(t) };
        }
        acc * h / 3.0
    }

    #[test]
    fn relu_and_gelu_definitions() {
        assert_eq!(relu(-1.0), 0.0);
        assert_eq!(relu(2.5), 2.5);
        assert_eq!(gelu(0.0), 0.0);
        let oracle = 1.0 * simpson_normal_cdf(1.0);
        assert!((gelu(1.0) - oracle).abs() < 1e-10);
    }

    #[test]
    fn forward_zero_params_gives_zero_output() {
        let spec = MlpSpec::new(3, &[5], 2, Activation::Relu).unwrap();
        let params = MlpParams::zeros(spec);
        let batch = Matrix::from_vec(2, 3, vec![1., -2., 3., 0.5, 0., -1.]).unwrap();
        let out = params.forward(&batch).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_relu_clips_negative_preactivation() {
        let spec = MlpSpec::new(1, &[1], 1, Activation::Relu).unwrap();
        let mut params = MlpParams::zeros(spec);
        params.weights[0].set(0, 0, 1.0);
        params.weights[1].set(0, 0, 1.0);
        let batch = Matrix::from_vec(1, 1, vec![-2.0]).unwrap();
        let out = params.forward(&batch).unwrap();
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn forward_matches_scalar_loop_oracle() {
        let spec = MlpSpec::new(3, &[5], 2, Activation::Gelu).unwrap();
        let params = MlpParams::init(spec, 42);
        let mut rng = rng_from_seed(7);
        let mut batch = Matrix::zeros(4, 3);
        for v in batch.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let out = params.forward(&batch).unwrap();

        // Scalar re-computation, one neuron at a time.
        for r in 0..4 {
            let x = batch.row(r);
            let mut hidden = vec![0.0; 5];
            for (j, h) in hidden.iter_mut().enumerate() {
                let mut z = params.biases[0][j];
                for (i, &xi) in x.iter().enumerate() {
                    z += xi * params.weights[0].get(i, j);
                }
                *h = gelu(z);
            }
            for k in 0..2 {
                let mut z = params.biases[1][k];
                for (j, &hj) in hidden.iter().enumerate() {
                    z += hj * params.weights[1].get(j, k);
                }
                assert!((out.get(r, k) - z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let spec = MlpSpec::new(2, &[3], 1, Activation::Gelu).unwrap();
        let params = MlpParams::init(spec, 1);
        let batch = Matrix::from_vec(2, 2, vec![0.3, -0.1, 0.2, 0.9]).unwrap();
        let cache = params.forward_cached(&batch).unwrap();
        let upstream = Matrix::zeros(2, 1);
        let grads = params.backward(&cache, &upstream).unwrap();
        assert!(grads.weights.iter().all(|w| w.data().iter().all(|&v| v == 0.0)));
        assert!(grads.biases.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_linear_net_gradient_is_input() {
        // 1-1 linear net (no hidden layer), loss = output.
        let spec = MlpSpec::new(1, &[], 1, Activation::Relu).unwrap();
        let params = MlpParams::init(spec, 3);
        let x = 1.7;
        let batch = Matrix::from_vec(1, 1, vec![x]).unwrap();
        let cache = params.forward_cached(&batch).unwrap();
        let upstream = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let grads = params.backward(&cache, &upstream).unwrap();
        assert!((grads.weights[0].get(0, 0) - x).abs() < 1e-15);
        assert!((grads.biases[0][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_central_finite_differences() {
        let spec = MlpSpec::new(4, &[8], 3, Activation::Gelu).unwrap();
        let mut params = MlpParams::init(spec, 11);
        let mut rng = rng_from_seed(5);
        let mut batch = Matrix::zeros(6, 4);
        for v in batch.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let mut target = Matrix::zeros(6, 3);
        for v in target.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }

        // Scalar MSE loss: mean over batch and coordinates.
        let loss = |p: &MlpParams| -> f64 {
            let out = p.forward(&batch).unwrap();
            out.data()
                .iter()
                .zip(target.data())
                .map(|(&o, &t)| (o - t) * (o - t))
                .sum::<f64>()
                / out.data().len() as f64
        };
        let out = params.forward(&batch).unwrap();
        let scale = 2.0 / out.data().len() as f64;
        let mut upstream = Matrix::zeros(6, 3);
        for ((u, &o), &t) in upstream.data_mut().iter_mut().zip(out.data()).zip(target.data()) {
            *u = scale * (o - t);
        }
        let cache = params.forward_cached(&batch).unwrap();
        let grads = params.backward(&cache, &upstream).unwrap();

        let step = 1e-5;
        for l in 0..params.weights.len() {
            for i in 0..params.weights[l].data().len() {
                let orig = params.weights[l].data()[i];
                params.weights[l].data_mut()[i] = orig + step;
                let up = loss(&params);
                params.weights[l].data_mut()[i] = orig - step;
                let down = loss(&params);
                params.weights[l].data_mut()[i] = orig;
                let fd = (up - down) / (2.0 * step);
                let an = grads.weights[l].data()[i];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom < 1e-4,
                    "layer {l} weight {i}: fd={fd} analytic={an}"
                );
            }
        }
    }

    #[test]
    fn mismatched_batch_width_is_a_dimension_error() {
        let spec = MlpSpec::new(3, &[4], 2, Activation::Relu).unwrap();
        let params = MlpParams::init(spec, 1);
        let batch = Matrix::zeros(2, 5);
        assert!(matches!(params.forward(&batch), Err(Error::Dimension(_))));
        let cache = params.forward_cached(&Matrix::zeros(2, 3)).unwrap();
        let bad_upstream = Matrix::zeros(2, 3);
        assert!(params.backward(&cache, &bad_upstream).is_err());
    }

    #[test]
    fn backward_preserves_parameter_shapes() {
        let spec = MlpSpec::new(3, &[4, 6], 2, Activation::Relu).unwrap();
        let params = MlpParams::init(spec, 2);
        let batch = Matrix::zeros(5, 3);
        let cache = params.forward_cached(&batch).unwrap();
        let grads = params.backward(&cache, &Matrix::zeros(5, 2)).unwrap();
        for (g, w) in grads.weights.iter().zip(&params.weights) {
            assert_eq!((g.rows(), g.cols()), (w.rows(), w.cols()));
        }
        for (g, b) in grads.biases.iter().zip(&params.biases) {
            assert_eq!(g.len(), b.len());
        }
        assert_eq!((grads.input.rows(), grads.input.cols()), (5, 3));
    }

    #[test]
    fn init_is_deterministic() {
        let spec = MlpSpec::new(3, &[4, 4], 2, Activation::Relu).unwrap();
        let a = MlpParams::init(spec.clone(), 99);
        let b = MlpParams::init(spec, 99);
        assert_eq!(a, b);
    }
}
