//! Adam optimizer and step learning-rate schedule.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{MlpGrads, MlpParams};

/// Adam state: one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    weight_m: Vec<Matrix>,
    weight_v: Vec<Matrix>,
    bias_m: Vec<Vec<f64>>,
    bias_v: Vec<Vec<f64>>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        AdamState {
            weight_m: params.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            weight_v: params.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            bias_m: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            bias_v: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One Adam update with bias correction. Rejects non-finite gradients so
    /// training loops can attach epoch context.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Argument("non-finite gradient in Adam step".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for l in 0..params.weights.len() {
            update_slice(
                params.weights[l].data_mut(),
                grads.weights[l].data(),
                self.weight_m[l].data_mut(),
                self.weight_v[l].data_mut(),
                self.lr,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
            update_slice(
                &mut params.biases[l],
                &grads.biases[l],
                &mut self.bias_m[l],
                &mut self.bias_v[l],
                self.lr,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// Learning rate that drops by a fixed factor every `drop_every` epochs.
#[derive(Debug, Clone, Copy)]
pub struct StepSchedule {
    pub initial_lr: f64,
    pub drop_factor: f64,
    pub drop_every: usize,
}

impl StepSchedule {
    pub fn new(initial_lr: f64, drop_factor: f64, drop_every: usize) -> Result<Self> {
        if initial_lr <= 0.0 || !(0.0..=1.0).contains(&drop_factor) || drop_factor == 0.0 || drop_every == 0 {
            return Err(Error::Config(
                "step schedule needs lr > 0, drop factor in (0,1], drop_every >= 1".into(),
            ));
        }
        Ok(StepSchedule { initial_lr, drop_factor, drop_every })
    }

    /// Constant learning rate.
    pub fn constant(lr: f64) -> Result<Self> {
        StepSchedule::new(lr, 1.0, 1)
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        self.initial_lr * self.drop_factor.powi((epoch / self.drop_every) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpSpec};

    fn scalar_net() -> MlpParams {
        let spec = MlpSpec::new(1, &[], 1, Activation::Relu).unwrap();
        MlpParams::zeros(spec)
    }

    fn grads_of(params: &MlpParams, wg: f64, bg: f64) -> MlpGrads {
        let mut g = MlpGrads {
            weights: params.weights.clone(),
            biases: params.biases.clone(),
            input: Matrix::zeros(0, 0),
        };
        for w in &mut g.weights {
            w.map_in_place(|_| wg);
        }
        for b in &mut g.biases {
            for v in b {
                *v = bg;
            }
        }
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = scalar_net();
        let before = params.clone();
        let mut state = AdamState::new(&params, 0.1);
        let g = grads_of(&params, 0.0, 0.0);
        state.step(&mut params, &g).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_matches_hand_evaluated_formulas() {
        // m = 0.1, v = 0.001; bias-corrected m_hat = v_hat = 1,
        // so the update is lr / (1 + eps).
        let mut params = scalar_net();
        let mut state = AdamState::new(&params, 0.1);
        let g = grads_of(&params, 1.0, 0.0);
        state.step(&mut params, &g).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        let got = params.weights[0].get(0, 0);
        assert!((got - expected).abs() < 1e-15, "got {got}, expected {expected}");
        assert!((got + 0.1).abs() < 1e-8);
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let spec = MlpSpec::new(2, &[3], 1, Activation::Gelu).unwrap();
        let mut a = MlpParams::init(spec.clone(), 5);
        let mut b = a.clone();
        let mut sa = AdamState::new(&a, 0.01);
        let mut sb = AdamState::new(&b, 0.01);
        let g = grads_of(&a, 0.3, -0.2);
        for _ in 0..10 {
            sa.step(&mut a, &g).unwrap();
            sb.step(&mut b, &g).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut params = scalar_net();
        let mut state = AdamState::new(&params, 0.1);
        let g = grads_of(&params, f64::NAN, 0.0);
        let err = state.step(&mut params, &g);
        assert!(err.is_err());
    }

    #[test]
    fn step_schedule_halves_every_ten_epochs() {
        let s = StepSchedule::new(1e-2, 0.5, 10).unwrap();
        assert_eq!(s.lr(0), 1e-2);
        assert_eq!(s.lr(9), 1e-2);
        assert_eq!(s.lr(10), 5e-3);
        assert_eq!(s.lr(25), 2.5e-3);
    }
}
