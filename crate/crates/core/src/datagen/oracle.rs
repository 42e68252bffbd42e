//! Ground-truth conditional functionals for the synthetic models.
//!
//! Closed forms are used wherever the generative mechanism admits them; the
//! latent-scale model M5 and the oscillating model M9 are handled by Monte
//! Carlo marginalization over their latent variables with a fixed dedicated
//! seed, so oracle values are deterministic.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::normal_pdf;
use crate::rng::rng_from_seed;

use super::{
    draw_response, inv_logit, m10_mean, m6_mean, m6_noise_scale, scaling_mean, sin_mean,
    DataModelId, M7_KAPPA, M9_C,
};

/// Latent draws for M5/M9 oracles always come from this stream.
const ORACLE_LATENT_SEED: u64 = 0x0c0ffee_d00d;

/// Number of points in the default density grid.
pub const DENSITY_GRID_POINTS: usize = 513;

/// Ground-truth oracle for one data model.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub model: DataModelId,
    /// Monte Carlo budget for latent marginalization (M5, M9).
    pub mc_budget: usize,
}

impl Oracle {
    pub fn new(model: DataModelId) -> Self {
        Oracle { model, mc_budget: 100_000 }
    }

    /// True conditional mean `E(Y | X = x)`.
    pub fn cond_mean(&self, x: &[f64]) -> Vec<f64> {
        match self.model {
            DataModelId::M1 | DataModelId::M2 | DataModelId::M3 => vec![sin_mean(x)],
            DataModelId::M4 => vec![0.0],
            DataModelId::M5 => {
                let (mean, _) = self.m5_latent_moments(x);
                vec![mean]
            }
            DataModelId::M6 => vec![m6_mean(x)],
            DataModelId::M7 => {
                let pi = inv_logit(M7_KAPPA * x[0]);
                vec![scaling_mean(x) * mixture_mgf(pi, -1.0, 1.0, 0.25)]
            }
            DataModelId::M8 => vec![scaling_mean(x) * mixture_mgf(0.5, -2.0, 2.0, 0.5)],
            DataModelId::M9 => {
                let (mean, _) = self.m9_moments(x);
                vec![mean]
            }
            DataModelId::M10 => m10_mean(x).to_vec(),
        }
    }

    /// True conditional standard deviation `SD(Y | X = x)`, per coordinate.
    ///
    /// For the latent-variable models this is the full conditional SD,
    /// including the variance induced by the latent mean term.
    pub fn cond_std(&self, x: &[f64]) -> Vec<f64> {
        match self.model {
            DataModelId::M1 | DataModelId::M2 | DataModelId::M3 => vec![1.0],
            DataModelId::M4 => {
                let latent_var: f64 =
                    0.25 * x.iter().take(4).map(|&v| v.sin() * v.sin()).sum::<f64>();
                vec![(1.0 + latent_var).sqrt()]
            }
            DataModelId::M5 => {
                let (_, var) = self.m5_latent_moments(x);
                vec![var.sqrt()]
            }
            DataModelId::M6 => vec![m6_noise_scale(x)],
            DataModelId::M7 => {
                let pi = inv_logit(M7_KAPPA * x[0]);
                let m1 = mixture_mgf(pi, -1.0, 1.0, 0.25);
                let m2 = mixture_mgf(pi, -1.0, 1.0, 0.5);
                vec![scaling_mean(x).abs() * (m2 - m1 * m1).max(0.0).sqrt()]
            }
            DataModelId::M8 => {
                let m1 = mixture_mgf(0.5, -2.0, 2.0, 0.5);
                let m2 = mixture_mgf(0.5, -2.0, 2.0, 1.0);
                vec![scaling_mean(x).abs() * (m2 - m1 * m1).max(0.0).sqrt()]
            }
            DataModelId::M9 => {
                let (_, var) = self.m9_moments(x);
                vec![var.sqrt()]
            }
            DataModelId::M10 => vec![1.0; 7],
        }
    }

    /// Draws `n` samples from the exact conditional law `Y | X = x` by
    /// re-drawing latents and noise with the predictors held fixed.
    pub fn cond_sample(&self, x: &[f64], n: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        let q = self.model.q();
        let mut out = Matrix::zeros(n, q);
        for r in 0..n {
            let y = draw_response(self.model, x, &mut rng);
            out.row_mut(r).copy_from_slice(&y);
        }
        out
    }

    /// Conditional density of a univariate response on `y_grid`.
    pub fn density_grid(&self, x: &[f64], y_grid: &[f64]) -> Result<Vec<f64>> {
        if self.model.q() != 1 {
            return Err(Error::UnsupportedModel(format!(
                "{} has a multivariate response; density grids need q = 1",
                self.model
            )));
        }
        Ok(match self.model {
            DataModelId::M1 | DataModelId::M2 | DataModelId::M3 => {
                let m = sin_mean(x);
                y_grid.iter().map(|&y| normal_pdf(y - m)).collect()
            }
            DataModelId::M4 => {
                // Mixture over the 2^4 latent sign patterns.
                let mut means = Vec::with_capacity(16);
                for mask in 0u32..16 {
                    let mut s = 0.0;
                    for (j, &xj) in x.iter().take(4).enumerate() {
                        let sign = if mask & (1 << j) == 0 { 1.0 } else { -1.0 };
                        s += (sign * xj).sin();
                    }
                    means.push(0.5 * s);
                }
                y_grid
                    .iter()
                    .map(|&y| means.iter().map(|&m| normal_pdf(y - m)).sum::<f64>() / 16.0)
                    .collect()
            }
            DataModelId::M5 => {
                let draws = self.m5_latent_means(x);
                y_grid
                    .iter()
                    .map(|&y| {
                        draws.iter().map(|&m| normal_pdf(y - m)).sum::<f64>() / draws.len() as f64
                    })
                    .collect()
            }
            DataModelId::M6 => {
                let (m, s) = (m6_mean(x), m6_noise_scale(x));
                y_grid.iter().map(|&y| normal_pdf((y - m) / s) / s).collect()
            }
            DataModelId::M7 => {
                let pi = inv_logit(M7_KAPPA * x[0]);
                scaled_log_mixture_density(y_grid, scaling_mean(x), 0.25, &[(pi, -1.0), (1.0 - pi, 1.0)])
            }
            DataModelId::M8 => {
                scaled_log_mixture_density(y_grid, scaling_mean(x), 0.5, &[(0.5, -2.0), (0.5, 2.0)])
            }
            DataModelId::M9 => {
                // No closed form; Gaussian KDE over a large conditional sample.
                let sample = self.cond_sample(x, self.mc_budget, ORACLE_LATENT_SEED);
                kde_gaussian(sample.data(), y_grid)
            }
            DataModelId::M10 => unreachable!("q = 1 checked above"),
        })
    }

    /// Evaluation grid spanning mean +/- 6 SD with 513 points.
    pub fn default_y_grid(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.model.q() != 1 {
            return Err(Error::UnsupportedModel(
                "default_y_grid needs a univariate response".into(),
            ));
        }
        let mean = self.cond_mean(x)[0];
        let sd = self.cond_std(x)[0].max(1e-12);
        let (lo, hi) = (mean - 6.0 * sd, mean + 6.0 * sd);
        let step = (hi - lo) / (DENSITY_GRID_POINTS - 1) as f64;
        Ok((0..DENSITY_GRID_POINTS).map(|i| lo + step * i as f64).collect())
    }

    /// Latent-mean draws `0.5 sum_j sin(Z_j x_j)` for M5, fixed seed.
    fn m5_latent_means(&self, x: &[f64]) -> Vec<f64> {
        let budget = self.mc_budget.max(10_000);
        let mut rng = rng_from_seed(ORACLE_LATENT_SEED);
        let mut out = Vec::with_capacity(budget);
        for _ in 0..budget {
            let mut s = 0.0;
            for &xi in x.iter().take(4) {
                let z: f64 = rng.random();
                s += (z * xi).sin();
            }
            out.push(0.5 * s);
        }
        out
    }

    fn m5_latent_moments(&self, x: &[f64]) -> (f64, f64) {
        let draws = self.m5_latent_means(x);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var_latent = draws.iter().map(|&d| (d - mean) * (d - mean)).sum::<f64>() / n;
        (mean, 1.0 + var_latent)
    }

    /// Mean and variance of `exp(sin(c x + eps))` for M9, fixed seed.
    fn m9_moments(&self, x: &[f64]) -> (f64, f64) {
        let budget = self.mc_budget.max(10_000);
        let mut rng = rng_from_seed(ORACLE_LATENT_SEED);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for _ in 0..budget {
            let eps: f64 = rng.sample(StandardNormal);
            let y = (M9_C * x[0] + eps).sin().exp();
            m1 += y;
            m2 += y * y;
        }
        let n = budget as f64;
        m1 /= n;
        m2 /= n;
        (m1, (m2 - m1 * m1).max(0.0))
    }
}

/// Moment generating function of a two-component Gaussian mixture with unit
/// component variances, evaluated at `t`.
fn mixture_mgf(weight_a: f64, mu_a: f64, mu_b: f64, t: f64) -> f64 {
    (t * t / 2.0).exp() * (weight_a * (t * mu_a).exp() + (1.0 - weight_a) * (t * mu_b).exp())
}

/// Density of `Y = m * exp(scale * eps)` where `eps` is a Gaussian mixture
/// with unit component variances. Supported on `sign(m) * (0, inf)`.
fn scaled_log_mixture_density(
    y_grid: &[f64],
    m: f64,
    scale: f64,
    components: &[(f64, f64)],
) -> Vec<f64> {
    y_grid
        .iter()
        .map(|&y| {
            let ratio = y / m;
            if m == 0.0 || ratio <= 0.0 {
                return 0.0;
            }
            let eps = ratio.ln() / scale;
            let f_eps: f64 = components
                .iter()
                .map(|&(w, mu)| w * normal_pdf(eps - mu))
                .sum();
            f_eps / (scale * y.abs())
        })
        .collect()
}

/// Gaussian KDE with Silverman's bandwidth.
fn kde_gaussian(sample: &[f64], y_grid: &[f64]) -> Vec<f64> {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let sd = (sample.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = (0.9 * spread * n.powf(-0.2)).max(1e-9);
    y_grid
        .iter()
        .map(|&y| sample.iter().map(|&s| normal_pdf((y - s) / h)).sum::<f64>() / (n * h))
        .collect()
}

/// Trapezoid integral of `values` over `grid`.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
    }
    acc
}
