//! Generative conditional distribution sampler.
//!
//! A generator `G(eta, x)` maps Gaussian latent noise plus predictors to a
//! response; a discriminator `D(x, y)` scores predictor-response pairs. Both
//! are trained by alternating steps on the empirical variational-KL
//! objective `mean_i { D(x_i, G(eta_i, x_i)) - exp(D(x_i, y_i)) }`, ascending
//! in the discriminator and descending in the generator. At the ideal
//! discriminator `D` equals the log density ratio of generated to real
//! joint distributions.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{minibatch_partition, Activation, AdamState, MlpGrads, MlpParams, MlpSpec};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scaling::Standardizer;

/// Exponent clamp inside `exp(D(x, y))`; the unbounded exponential is the
/// known instability of this objective.
pub const EXP_CLAMP: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct GcdsConfig {
    /// Latent noise dimension `m`.
    pub latent_dim: usize,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Discriminator steps per generator step.
    pub disc_steps_per_gen: usize,
}

impl Default for GcdsConfig {
    fn default() -> Self {
        GcdsConfig {
            latent_dim: 3,
            lr_gen: 1e-4,
            lr_disc: 1e-4,
            epochs: 500,
            batch_size: 128,
            disc_steps_per_gen: 1,
        }
    }
}

/// Trained sampler plus training diagnostics.
#[derive(Debug, Clone)]
pub struct GcdsModel {
    /// `[x | eta] -> y`, one hidden layer of width 50.
    pub generator: MlpParams,
    /// `[x | y] -> score`, hidden widths 50 and 25.
    pub discriminator: MlpParams,
    pub y_scaler: Standardizer,
    pub latent_dim: usize,
    pub p: usize,
    pub q: usize,
    pub epochs_run: usize,
    /// Batch steps in which `exp(D)` hit the clamp.
    pub overflow_steps: usize,
    pub total_steps: usize,
}

impl GcdsModel {
    /// True when more than 1% of training steps clamped the exponential.
    pub fn instability_warning(&self) -> bool {
        self.total_steps > 0 && self.overflow_steps * 100 > self.total_steps
    }

    /// Draws `n` samples at `x`: fresh latents, one generator pass, then
    /// de-standardization back to the original response scale.
    pub fn sample(&self, x: &[f64], n: usize, seed: u64) -> Result<Matrix> {
        if x.len() != self.p {
            return Err(Error::Dimension(format!(
                "query point has {} coordinates, model expects {}",
                x.len(),
                self.p
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut input = Matrix::zeros(n, self.p + self.latent_dim);
        for r in 0..n {
            let row = input.row_mut(r);
            row[..self.p].copy_from_slice(x);
            for v in &mut row[self.p..] {
                *v = rng.sample(StandardNormal);
            }
        }
        let out = self.generator.forward(&input)?;
        Ok(self.y_scaler.inverse(&out))
    }
}

fn clamped_exp(v: f64) -> (f64, bool) {
    if v > EXP_CLAMP {
        (EXP_CLAMP.exp(), true)
    } else {
        (v.exp(), false)
    }
}

/// Empirical objective on one batch (responses on the original scale; the
/// model's standardizer is applied internally).
pub fn gcds_loss(model: &GcdsModel, x: &Matrix, y: &Matrix, eta: &Matrix) -> Result<f64> {
    let n = x.rows();
    if y.rows() != n || eta.rows() != n {
        return Err(Error::Dimension(format!(
            "batch sizes differ: x {} rows, y {} rows, eta {} rows",
            n,
            y.rows(),
            eta.rows()
        )));
    }
    let y_std = model.y_scaler.transform(y);
    let fake = model.generator.forward(&x.hcat(eta)?)?;
    let d_fake = model.discriminator.forward(&x.hcat(&fake)?)?;
    let d_real = model.discriminator.forward(&x.hcat(&y_std)?)?;
    let mut acc = 0.0;
    for i in 0..n {
        let (e, _) = clamped_exp(d_real.get(i, 0));
        acc += d_fake.get(i, 0) - e;
    }
    Ok(acc / n as f64)
}

fn add_grads(acc: &mut MlpGrads, other: &MlpGrads) {
    for (a, o) in acc.weights.iter_mut().zip(&other.weights) {
        for (av, &ov) in a.data_mut().iter_mut().zip(o.data()) {
            *av += ov;
        }
    }
    for (a, o) in acc.biases.iter_mut().zip(&other.biases) {
        for (av, &ov) in a.iter_mut().zip(o) {
            *av += ov;
        }
    }
}

/// Alternating minimax training; latent noise is re-drawn at each epoch.
pub fn train(data: &Dataset, config: &GcdsConfig, seed: u64) -> Result<GcdsModel> {
    let (p, q, m) = (data.x.cols(), data.y.cols(), config.latent_dim.max(1));
    let n = data.n();
    if config.epochs > 0 && n < config.batch_size {
        return Err(Error::Config("training set smaller than one batch".into()));
    }
    let y_scaler = Standardizer::fit(&data.y);
    let y_std = y_scaler.transform(&data.y);

    let gen_spec = MlpSpec::new(p + m, &[50], q, Activation::Relu)?;
    let disc_spec = MlpSpec::new(p + q, &[50, 25], 1, Activation::Relu)?;
    let mut generator = MlpParams::init(gen_spec, derive_seed(seed, "gcds-gen"));
    let mut discriminator = MlpParams::init(disc_spec, derive_seed(seed, "gcds-disc"));
    let mut adam_gen = AdamState::new(&generator, config.lr_gen);
    let mut adam_disc = AdamState::new(&discriminator, config.lr_disc);
    let mut rng = rng_from_seed(derive_seed(seed, "gcds-train"));

    let mut overflow_steps = 0usize;
    let mut total_steps = 0usize;

    for epoch in 0..config.epochs {
        // Fresh latent noise for the whole epoch.
        let mut eta = Matrix::zeros(n, m);
        for v in eta.data_mut() {
            *v = rng.sample(StandardNormal);
        }
        for batch in minibatch_partition(n, config.batch_size, &mut rng) {
            let b = batch.len();
            let x_b = data.x.take_rows(&batch);
            let y_b = y_std.take_rows(&batch);
            let eta_b = eta.take_rows(&batch);
            let gen_in = x_b.hcat(&eta_b)?;

            // Discriminator ascent.
            for _ in 0..config.disc_steps_per_gen.max(1) {
                let fake = generator.forward(&gen_in)?;
                let cache_fake = discriminator.forward_cached(&x_b.hcat(&fake)?)?;
                let cache_real = discriminator.forward_cached(&x_b.hcat(&y_b)?)?;
                let inv_b = 1.0 / b as f64;
                let mut up_fake = Matrix::zeros(b, 1);
                for v in up_fake.data_mut() {
                    *v = inv_b;
                }
                let mut up_real = Matrix::zeros(b, 1);
                let mut loss = 0.0;
                let mut overflowed = false;
                for i in 0..b {
                    let d_real = cache_real.output().get(i, 0);
                    let (e, clamped) = clamped_exp(d_real);
                    overflowed |= clamped;
                    loss += cache_fake.output().get(i, 0) - e;
                    // d/dv exp(min(v, clamp)) vanishes past the clamp.
                    up_real.set(i, 0, if clamped { 0.0 } else { -e * inv_b });
                }
                loss *= inv_b;
                total_steps += 1;
                if overflowed {
                    overflow_steps += 1;
                }
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        message: format!("non-finite adversarial loss {loss}"),
                    });
                }
                let mut grads = discriminator.backward(&cache_fake, &up_fake)?;
                let grads_real = discriminator.backward(&cache_real, &up_real)?;
                add_grads(&mut grads, &grads_real);
                grads.negate();
                adam_disc.step(&mut discriminator, &grads).map_err(|e| Error::Training {
                    epoch,
                    message: e.to_string(),
                })?;
            }

            // Generator descent through the discriminator.
            let cache_gen = generator.forward_cached(&gen_in)?;
            let cache_d = discriminator.forward_cached(&x_b.hcat(cache_gen.output())?)?;
            let mut up_d = Matrix::zeros(b, 1);
            for v in up_d.data_mut() {
                *v = 1.0 / b as f64;
            }
            let d_grads = discriminator.backward(&cache_d, &up_d)?;
            let mut up_gen = Matrix::zeros(b, q);
            for r in 0..b {
                up_gen
                    .row_mut(r)
                    .copy_from_slice(&d_grads.input.row(r)[p..p + q]);
            }
            let g_grads = generator.backward(&cache_gen, &up_gen)?;
            adam_gen.step(&mut generator, &g_grads).map_err(|e| Error::Training {
                epoch,
                message: e.to_string(),
            })?;
        }
    }

    Ok(GcdsModel {
        generator,
        discriminator,
        y_scaler,
        latent_dim: m,
        p,
        q,
        epochs_run: config.epochs,
        overflow_steps,
        total_steps,
    })
}
