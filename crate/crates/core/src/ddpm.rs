//! Conditional denoising diffusion sampler.
//!
//! Forward corruption is the AR(1) scheme `y_t = sqrt(alpha_t) y_{t-1} +
//! sqrt(beta_t) eps_t`, trained with single-step noise prediction (one random
//! timestep per sample per batch) and sampled by iterating the learned
//! reverse transition from pure noise down to `t = 0`. The noise network
//! takes `[y_t, x, t/T]` and predicts the aggregated noise.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{minibatch_partition, Activation, AdamState, InferenceScratch, MlpParams, MlpSpec, StepSchedule};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scaling::Standardizer;

/// Linear-in-t noise schedule and the quantities derived from it.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    /// `beta_t`, indexed by `t - 1`.
    pub beta: Vec<f64>,
    /// `alpha_t = 1 - beta_t`.
    pub alpha: Vec<f64>,
    /// `alpha_bar_t = prod_{s<=t} alpha_s`.
    pub alpha_bar: Vec<f64>,
    /// Posterior noise scale `sigma(t)`, zero at `t = 1`.
    pub sigma: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule with `beta` linear from `beta_start` to `beta_end`.
    pub fn linear(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_steps == 0 {
            return Err(Error::Config("noise schedule needs T >= 1".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "invalid beta range [{beta_start}, {beta_end}]; need 0 < start <= end < 1"
            )));
        }
        let beta: Vec<f64> = if t_steps == 1 {
            vec![beta_start]
        } else {
            (0..t_steps)
                .map(|i| {
                    beta_start + (beta_end - beta_start) * i as f64 / (t_steps - 1) as f64
                })
                .collect()
        };
        Ok(NoiseSchedule::from_betas(beta))
    }

    pub fn from_betas(beta: Vec<f64>) -> Self {
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut prod = 1.0;
        for &a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        let mut sigma = Vec::with_capacity(beta.len());
        for t in 1..=beta.len() {
            let prev_bar = if t == 1 { 1.0 } else { alpha_bar[t - 2] };
            let var = (1.0 - alpha[t - 1]) * (1.0 - prev_bar) / (1.0 - alpha_bar[t - 1]);
            sigma.push(var.max(0.0).sqrt());
        }
        NoiseSchedule { beta, alpha, alpha_bar, sigma }
    }

    pub fn t_steps(&self) -> usize {
        self.beta.len()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_steps() {
            return Err(Error::Index(format!(
                "diffusion step {t} outside 1..={}",
                self.t_steps()
            )));
        }
        Ok(())
    }

    /// `alpha_bar_t` with the convention `alpha_bar_0 = 1`.
    pub fn alpha_bar_at(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Closed-form forward corruption `sqrt(ab_t) y0 + sqrt(1 - ab_t) eps`.
    pub fn forward_noise(&self, y0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_t(t)?;
        let ab = self.alpha_bar_at(t);
        Ok(y0
            .iter()
            .zip(eps)
            .map(|(&y, &e)| ab.sqrt() * y + (1.0 - ab).sqrt() * e)
            .collect())
    }

    /// Inverts the forward corruption given the aggregated noise.
    pub fn reconstruct_y0(&self, yt: &[f64], t: usize, eps_bar: &[f64]) -> Result<Vec<f64>> {
        self.check_t(t)?;
        let ab = self.alpha_bar_at(t);
        Ok(yt
            .iter()
            .zip(eps_bar)
            .map(|(&y, &e)| (y - (1.0 - ab).sqrt() * e) / ab.sqrt())
            .collect())
    }

    /// Posterior mean in the two-term `(y_t, y_0)` parameterization.
    pub fn posterior_mean_from_y0(&self, yt: &[f64], y0: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check_t(t)?;
        let a = self.alpha[t - 1];
        let ab = self.alpha_bar_at(t);
        let ab_prev = self.alpha_bar_at(t - 1);
        Ok(yt
            .iter()
            .zip(y0)
            .map(|(&y, &y_0)| {
                (a.sqrt() * (1.0 - ab_prev) * y + ab_prev.sqrt() * (1.0 - a) * y_0) / (1.0 - ab)
            })
            .collect())
    }

    /// Posterior mean in the noise parameterization.
    pub fn posterior_mean_from_noise(&self, yt: &[f64], eps_bar: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check_t(t)?;
        let a = self.alpha[t - 1];
        let ab = self.alpha_bar_at(t);
        Ok(yt
            .iter()
            .zip(eps_bar)
            .map(|(&y, &e)| (y - (1.0 - a) / (1.0 - ab).sqrt() * e) / a.sqrt())
            .collect())
    }
}

/// Training configuration for the diffusion sampler.
#[derive(Debug, Clone)]
pub struct DdpmConfig {
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epochs: usize,
    pub lr_schedule: StepSchedule,
    pub batch_size: usize,
}

impl Default for DdpmConfig {
    fn default() -> Self {
        DdpmConfig {
            t_steps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
            epochs: 50,
            lr_schedule: StepSchedule::new(1e-2, 0.5, 10).expect("valid default schedule"),
            batch_size: 128,
        }
    }
}

/// Trained conditional diffusion model.
#[derive(Debug, Clone)]
pub struct DdpmModel {
    pub noise_net: MlpParams,
    pub schedule: NoiseSchedule,
    pub y_scaler: Standardizer,
    pub p: usize,
    pub q: usize,
    pub epochs_run: usize,
}

/// Trains the noise-prediction network: for each batch element draw a
/// uniform timestep and a Gaussian noise vector, corrupt the response, and
/// regress the injected noise with a mean-squared error.
pub fn train(data: &Dataset, config: &DdpmConfig, seed: u64) -> Result<DdpmModel> {
    let (p, q) = (data.x.cols(), data.y.cols());
    let n = data.n();
    let schedule = NoiseSchedule::linear(config.t_steps, config.beta_start, config.beta_end)?;
    if config.epochs > 0 && n < config.batch_size.min(n.max(1)) {
        return Err(Error::Config("training set smaller than one batch".into()));
    }
    let y_scaler = Standardizer::fit(&data.y);
    let y_std = y_scaler.transform(&data.y);

    let spec = MlpSpec::new(q + p + 1, &[50, 25], q, Activation::Relu)?;
    let mut params = MlpParams::init(spec, derive_seed(seed, "ddpm-init"));
    let mut adam = AdamState::new(&params, config.lr_schedule.lr(0));
    let mut rng = rng_from_seed(derive_seed(seed, "ddpm-train"));
    let t_total = schedule.t_steps() as f64;

    for epoch in 0..config.epochs {
        adam.lr = config.lr_schedule.lr(epoch);
        for batch in minibatch_partition(n, config.batch_size, &mut rng) {
            let b = batch.len();
            let mut input = Matrix::zeros(b, q + p + 1);
            let mut noise = Matrix::zeros(b, q);
            for (row, &i) in batch.iter().enumerate() {
                let t = rng.random_range(1..=schedule.t_steps());
                let eps: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
                let y_t = schedule.forward_noise(y_std.row(i), t, &eps)?;
                let dst = input.row_mut(row);
                dst[..q].copy_from_slice(&y_t);
                dst[q..q + p].copy_from_slice(data.x.row(i));
                dst[q + p] = t as f64 / t_total;
                noise.row_mut(row).copy_from_slice(&eps);
            }
            let cache = params.forward_cached(&input)?;
            let pred = cache.output();
            let mut loss = 0.0;
            let mut upstream = Matrix::zeros(b, q);
            let scale = 2.0 / b as f64;
            for ((u, &e), &eh) in upstream
                .data_mut()
                .iter_mut()
                .zip(noise.data())
                .zip(pred.data())
            {
                loss += (e - eh) * (e - eh);
                *u = scale * (eh - e);
            }
            loss /= b as f64;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite diffusion loss {loss}"),
                });
            }
            let grads = params.backward(&cache, &upstream)?;
            adam.step(&mut params, &grads).map_err(|e| Error::Training {
                epoch,
                message: e.to_string(),
            })?;
        }
    }

    Ok(DdpmModel {
        noise_net: params,
        schedule,
        y_scaler,
        p,
        q,
        epochs_run: config.epochs,
    })
}

impl DdpmModel {
    /// Runs one reverse chain; equivalent to `sample(x, 1, seed)`.
    pub fn reverse_sample(&self, x: &[f64], seed: u64) -> Result<Vec<f64>> {
        let m = self.sample(x, 1, seed)?;
        Ok(m.row(0).to_vec())
    }

    /// Draws `n` conditional samples at `x` by running `n` reverse chains in
    /// lockstep: one batched network pass per diffusion step.
    pub fn sample(&self, x: &[f64], n: usize, seed: u64) -> Result<Matrix> {
        if x.len() != self.p {
            return Err(Error::Dimension(format!(
                "query point has {} coordinates, model expects {}",
                x.len(),
                self.p
            )));
        }
        let (q, p) = (self.q, self.p);
        let t_total = self.schedule.t_steps();
        let mut rng = rng_from_seed(seed);
        let mut y = Matrix::zeros(n, q);
        for v in y.data_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut input = Matrix::zeros(n, q + p + 1);
        for r in 0..n {
            input.row_mut(r)[q..q + p].copy_from_slice(x);
        }
        let mut scratch = InferenceScratch::default();
        for t in (1..=t_total).rev() {
            let time = t as f64 / t_total as f64;
            for r in 0..n {
                let row = input.row_mut(r);
                row[..q].copy_from_slice(y.row(r));
                row[q + p] = time;
            }
            self.noise_net.forward_reusing(&input, &mut scratch)?;
            let eps_hat = scratch.output();
            let a = self.schedule.alpha[t - 1];
            let ab = self.schedule.alpha_bar_at(t);
            let sigma = self.schedule.sigma[t - 1];
            let coef = (1.0 - a) / (1.0 - ab).sqrt();
            let inv_sqrt_a = 1.0 / a.sqrt();
            if t > 1 {
                for (v, &e) in y.data_mut().iter_mut().zip(eps_hat.data()) {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = inv_sqrt_a * (*v - coef * e) + sigma * z;
                }
            } else {
                for (v, &e) in y.data_mut().iter_mut().zip(eps_hat.data()) {
                    *v = inv_sqrt_a * (*v - coef * e);
                }
            }
        }
        Ok(self.y_scaler.inverse(&y))
    }
}
