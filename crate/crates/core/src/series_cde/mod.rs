//! Orthogonal-series conditional density estimation.
//!
//! The conditional density of a scaled response is expanded in a cosine
//! basis, `f(y|x) = sum_j beta_j(x) phi_j(y)`, turning density estimation
//! into regression of `phi_j(Y)` on `X`. Two fitting routes are provided:
//! per-coefficient nonparametric regression (k-NN or random forest) with
//! prefix truncation chosen on a validation set, and a joint network that
//! outputs all coefficients at once, trained on the same loss with early
//! stopping. Raw series estimates may go negative, so densities are clipped
//! and renormalized before use.

pub mod forest;

use rand::Rng as _;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{minibatch_partition, Activation, AdamState, MlpParams, MlpSpec};
use crate::rng::{derive_seed, derive_seed_indexed, rng_from_seed};
use crate::scaling::Standardizer;
use forest::{ForestParams, RandomForest};
use rayon::prelude::*;

/// Cosine system on `[0, 1]`: `phi_1 = 1`, `phi_j(y) = sqrt(2) cos((j-1) pi y)`.
#[derive(Debug, Clone, Copy)]
pub struct CosineBasis {
    pub j_max: usize,
}

impl CosineBasis {
    pub fn new(j_max: usize) -> Result<Self> {
        if j_max == 0 {
            return Err(Error::Config("basis needs j_max >= 1".into()));
        }
        Ok(CosineBasis { j_max })
    }

    /// `phi_j(y)` for 1-based `j`.
    pub fn eval(&self, j: usize, y: f64) -> Result<f64> {
        if j == 0 || j > self.j_max {
            return Err(Error::Index(format!("basis index {j} outside 1..={}", self.j_max)));
        }
        Ok(if j == 1 {
            1.0
        } else {
            std::f64::consts::SQRT_2 * ((j - 1) as f64 * std::f64::consts::PI * y).cos()
        })
    }

    /// All basis values at `y` into `out` (length `j_max`).
    fn eval_all(&self, y: f64, out: &mut [f64]) {
        out[0] = 1.0;
        for (jm1, v) in out.iter_mut().enumerate().skip(1) {
            *v = std::f64::consts::SQRT_2 * (jm1 as f64 * std::f64::consts::PI * y).cos();
        }
    }
}

impl Default for CosineBasis {
    fn default() -> Self {
        CosineBasis { j_max: 31 }
    }
}

/// Maps training responses onto `[0, 1]` and back.
#[derive(Debug, Clone, Copy)]
pub struct YScaler {
    pub y_min: f64,
    pub y_max: f64,
}

impl YScaler {
    pub fn fit(y: &[f64]) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in y {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        YScaler { y_min: lo, y_max: hi }
    }

    fn span(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Scaled value, clipped into `[0, 1]`; a degenerate range maps to 0.
    pub fn scale(&self, y: f64) -> f64 {
        if self.span() <= 1e-12 {
            0.0
        } else {
            ((y - self.y_min) / self.span()).clamp(0.0, 1.0)
        }
    }

    pub fn inverse(&self, u: f64) -> f64 {
        self.y_min + u * self.span()
    }
}

/// Where a model's coefficient functions come from.
#[derive(Debug, Clone)]
pub enum CoefSource {
    /// Fixed coefficient vector; diagnostics and tests.
    Constant(Vec<f64>),
    /// One random forest per basis index.
    Forests(Vec<RandomForest>),
    /// k-nearest-neighbor averaging of training basis values.
    Knn {
        x_train: Matrix,
        /// `phi_j(y_i)` per training row.
        phi_train: Matrix,
        k: usize,
    },
    /// Joint network emitting all coefficients; predictors standardized.
    Network {
        params: MlpParams,
        x_scaler: Standardizer,
    },
}

/// Fitted series model: basis, response scaler, active prefix, coefficients.
#[derive(Debug, Clone)]
pub struct SeriesCdeModel {
    pub basis: CosineBasis,
    pub scaler: YScaler,
    /// Retained prefix `{1..=active}`; always contains index 1.
    pub active: usize,
    pub source: CoefSource,
}

impl SeriesCdeModel {
    /// Retained basis indices.
    pub fn active_set(&self) -> Vec<usize> {
        (1..=self.active).collect()
    }

    /// All `j_max` coefficient values at `x`.
    pub fn predict_coefs(&self, x: &[f64]) -> Vec<f64> {
        match &self.source {
            CoefSource::Constant(c) => c.clone(),
            CoefSource::Forests(forests) => forests.iter().map(|f| f.predict(x)).collect(),
            CoefSource::Knn { x_train, phi_train, k } => {
                let mut dist: Vec<(f64, usize)> = (0..x_train.rows())
                    .map(|i| {
                        let d = x_train
                            .row(i)
                            .iter()
                            .zip(x)
                            .map(|(&a, &b)| (a - b) * (a - b))
                            .sum::<f64>();
                        (d, i)
                    })
                    .collect();
                let k = (*k).clamp(1, dist.len());
                dist.select_nth_unstable_by(k - 1, |a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut out = vec![0.0; phi_train.cols()];
                for &(_, i) in &dist[..k] {
                    for (o, &v) in out.iter_mut().zip(phi_train.row(i)) {
                        *o += v;
                    }
                }
                for o in &mut out {
                    *o /= k as f64;
                }
                out
            }
            CoefSource::Network { params, x_scaler } => {
                let row = x_scaler.transform_row(x);
                let input = Matrix::from_vec(1, row.len(), row).expect("row shape");
                params.forward(&input).expect("network forward").row(0).to_vec()
            }
        }
    }

    /// Post-processed density on a grid of scaled responses in `[0, 1]`:
    /// negatives clipped, renormalized to unit trapezoid integral; an
    /// all-zero raw series falls back to the uniform density.
    pub fn density_eval(&self, x: &[f64], grid: &[f64]) -> Vec<f64> {
        let coefs = self.predict_coefs(x);
        self.density_from_coefs(&coefs, grid)
    }

    fn density_from_coefs(&self, coefs: &[f64], grid: &[f64]) -> Vec<f64> {
        let mut phi = vec![0.0; self.basis.j_max];
        let mut dens: Vec<f64> = grid
            .iter()
            .map(|&g| {
                self.basis.eval_all(g, &mut phi);
                let raw: f64 = coefs
                    .iter()
                    .take(self.active)
                    .zip(&phi)
                    .map(|(&c, &p)| c * p)
                    .sum();
                raw.max(0.0)
            })
            .collect();
        let mut integral = 0.0;
        for i in 1..grid.len() {
            integral += 0.5 * (dens[i] + dens[i - 1]) * (grid[i] - grid[i - 1]);
        }
        if integral <= 1e-12 {
            dens.fill(1.0);
        } else {
            for d in &mut dens {
                *d /= integral;
            }
        }
        dens
    }

    /// Inverse-CDF sampling on a 513-point grid, mapped back to the original
    /// response scale.
    pub fn sample(&self, x: &[f64], n: usize, seed: u64) -> Matrix {
        const GRID: usize = 513;
        let grid: Vec<f64> = (0..GRID).map(|i| i as f64 / (GRID - 1) as f64).collect();
        let dens = self.density_eval(x, &grid);
        // Cumulative trapezoid CDF, normalized endpoint.
        let mut cdf = vec![0.0; GRID];
        for i in 1..GRID {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (grid[i] - grid[i - 1]);
        }
        let total = cdf[GRID - 1];
        if total > 0.0 {
            for c in &mut cdf {
                *c /= total;
            }
        }
        let mut rng = rng_from_seed(seed);
        let mut out = Matrix::zeros(n, 1);
        for r in 0..n {
            let u: f64 = rng.random();
            let scaled = invert_cdf(&grid, &cdf, u);
            out.set(r, 0, self.scaler.inverse(scaled));
        }
        out
    }
}

/// Linear-interpolation inverse of a nondecreasing piecewise-linear CDF.
pub(crate) fn invert_cdf(grid: &[f64], cdf: &[f64], u: f64) -> f64 {
    if u <= cdf[0] {
        return grid[0];
    }
    let last = cdf.len() - 1;
    if u >= cdf[last] {
        return grid[last];
    }
    // First index with cdf[idx] >= u.
    let idx = cdf.partition_point(|&c| c < u);
    let (c0, c1) = (cdf[idx - 1], cdf[idx]);
    if c1 > c0 {
        grid[idx - 1] + (grid[idx] - grid[idx - 1]) * (u - c0) / (c1 - c0)
    } else {
        grid[idx]
    }
}

fn check_univariate(data: &Dataset) -> Result<()> {
    if data.y.cols() != 1 {
        return Err(Error::UnsupportedModel(
            "series estimators support only a univariate response".into(),
        ));
    }
    Ok(())
}

/// `phi_j` values of the scaled responses, one row per sample.
fn basis_targets(basis: &CosineBasis, scaler: &YScaler, y: &Matrix) -> Matrix {
    let n = y.rows();
    let mut out = Matrix::zeros(n, basis.j_max);
    for i in 0..n {
        let scaled = scaler.scale(y.get(i, 0));
        basis.eval_all(scaled, out.row_mut(i));
    }
    out
}

/// Series CDE surrogate loss over a dataset, restricted to the active
/// prefix: `mean_i [ sum_j beta_j(x_i)^2 - 2 sum_j beta_j(x_i) phi_j(y_i) ]`.
pub fn cde_loss(model: &SeriesCdeModel, data: &Dataset) -> Result<f64> {
    check_univariate(data)?;
    let n = data.n();
    let mut phi = vec![0.0; model.basis.j_max];
    let mut acc = 0.0;
    for i in 0..n {
        let coefs = model.predict_coefs(data.x.row(i));
        let scaled = model.scaler.scale(data.y.get(i, 0));
        model.basis.eval_all(scaled, &mut phi);
        for j in 0..model.active {
            acc += coefs[j] * coefs[j] - 2.0 * coefs[j] * phi[j];
        }
    }
    let loss = acc / n as f64;
    if !loss.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            message: format!("non-finite CDE loss {loss}"),
        });
    }
    Ok(loss)
}

/// Per-coefficient regressor choice for [`fit_flexcode`].
#[derive(Debug, Clone)]
pub enum Regressor {
    Knn { k: Option<usize> },
    Forest(ForestParams),
}

/// Fits one regression per basis coefficient and truncates the expansion at
/// the prefix length minimizing the validation loss.
pub fn fit_flexcode(
    train: &Dataset,
    val: &Dataset,
    basis: CosineBasis,
    regressor: &Regressor,
    seed: u64,
) -> Result<SeriesCdeModel> {
    check_univariate(train)?;
    check_univariate(val)?;
    let scaler = YScaler::fit(train.y.col(0).as_slice());
    let phi_train = basis_targets(&basis, &scaler, &train.y);

    let source = match regressor {
        Regressor::Knn { k } => {
            let k = k.unwrap_or_else(|| {
                // ceil(n^{4/5} / 10)
                ((train.n() as f64).powf(0.8) / 10.0).ceil() as usize
            });
            CoefSource::Knn {
                x_train: train.x.clone(),
                phi_train,
                k: k.max(1),
            }
        }
        Regressor::Forest(params) => {
            let forests: Result<Vec<RandomForest>> = (0..basis.j_max)
                .into_par_iter()
                .map(|jm1| {
                    RandomForest::fit(
                        &train.x,
                        &phi_train.col(jm1),
                        params,
                        derive_seed_indexed(seed, "coef", jm1 as u64),
                    )
                    .map_err(|e| Error::CoefficientFit {
                        index: jm1 + 1,
                        message: e.to_string(),
                    })
                })
                .collect();
            CoefSource::Forests(forests?)
        }
    };

    let mut model = SeriesCdeModel {
        basis,
        scaler,
        active: basis.j_max,
        source,
    };
    model.active = select_prefix(&model, val)?;
    Ok(model)
}

/// Per-index validation scores `s_j`; the loss of prefix `J` is
/// `sum_{j<=J} s_j`.
fn prefix_scores(model: &SeriesCdeModel, val: &Dataset) -> Result<Vec<f64>> {
    check_univariate(val)?;
    let j_max = model.basis.j_max;
    let mut scores = vec![0.0; j_max];
    let mut phi = vec![0.0; j_max];
    for i in 0..val.n() {
        let coefs = model.predict_coefs(val.x.row(i));
        let scaled = model.scaler.scale(val.y.get(i, 0));
        model.basis.eval_all(scaled, &mut phi);
        for j in 0..j_max {
            scores[j] += coefs[j] * coefs[j] - 2.0 * coefs[j] * phi[j];
        }
    }
    for s in &mut scores {
        *s /= val.n() as f64;
    }
    Ok(scores)
}

fn select_prefix(model: &SeriesCdeModel, val: &Dataset) -> Result<usize> {
    let scores = prefix_scores(model, val)?;
    let mut best = (f64::INFINITY, 1);
    let mut acc = 0.0;
    for (jm1, &s) in scores.iter().enumerate() {
        acc += s;
        if acc < best.0 {
            best = (acc, jm1 + 1);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone)]
pub struct DeepCdeConfig {
    pub lr: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
}

impl Default for DeepCdeConfig {
    fn default() -> Self {
        DeepCdeConfig {
            lr: 1e-4,
            patience: 20,
            max_epochs: 500,
            batch_size: 128,
        }
    }
}

/// Result of [`fit_deepcde`]: the model plus how many epochs actually ran.
pub struct DeepCdeFit {
    pub model: SeriesCdeModel,
    pub epochs_run: usize,
}

/// Joint-network route: a 32-64-32 GELU MLP maps standardized predictors to
/// all basis coefficients, trained on the CDE loss with early stopping on
/// the validation loss (best parameters restored).
pub fn fit_deepcde(
    train: &Dataset,
    val: &Dataset,
    basis: CosineBasis,
    config: &DeepCdeConfig,
    seed: u64,
) -> Result<DeepCdeFit> {
    check_univariate(train)?;
    check_univariate(val)?;
    let scaler = YScaler::fit(train.y.col(0).as_slice());
    let x_scaler = Standardizer::fit(&train.x);
    let x_std = x_scaler.transform(&train.x);
    let phi_train = basis_targets(&basis, &scaler, &train.y);
    let x_val = x_scaler.transform(&val.x);
    let phi_val = basis_targets(&basis, &scaler, &val.y);

    let spec = MlpSpec::new(train.x.cols(), &[32, 64, 32], basis.j_max, Activation::Gelu)?;
    let mut params = MlpParams::init(spec, derive_seed(seed, "deepcde-init"));
    let mut adam = AdamState::new(&params, config.lr);
    let mut rng = rng_from_seed(derive_seed(seed, "deepcde-train"));

    let val_loss = |p: &MlpParams| -> Result<f64> {
        let coefs = p.forward(&x_val)?;
        let mut acc = 0.0;
        for (c, f) in coefs.data().iter().zip(phi_val.data()) {
            acc += c * c - 2.0 * c * f;
        }
        Ok(acc / val.n() as f64)
    };

    let mut best_params = params.clone();
    let mut best_loss = val_loss(&params)?;
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 0..config.max_epochs {
        for batch in minibatch_partition(train.n(), config.batch_size, &mut rng) {
            let b = batch.len();
            let x_b = x_std.take_rows(&batch);
            let phi_b = phi_train.take_rows(&batch);
            let cache = params.forward_cached(&x_b)?;
            let coefs = cache.output();
            let mut loss = 0.0;
            let mut upstream = Matrix::zeros(b, basis.j_max);
            let scale = 2.0 / b as f64;
            for ((u, &c), &f) in upstream
                .data_mut()
                .iter_mut()
                .zip(coefs.data())
                .zip(phi_b.data())
            {
                loss += c * c - 2.0 * c * f;
                *u = scale * (c - f);
            }
            loss /= b as f64;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite CDE loss {loss}"),
                });
            }
            let grads = params.backward(&cache, &upstream)?;
            adam.step(&mut params, &grads).map_err(|e| Error::Training {
                epoch,
                message: e.to_string(),
            })?;
        }
        epochs_run = epoch + 1;
        let vl = val_loss(&params)?;
        if vl < best_loss {
            best_loss = vl;
            best_params = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    Ok(DeepCdeFit {
        model: SeriesCdeModel {
            basis,
            scaler,
            active: basis.j_max,
            source: CoefSource::Network {
                params: best_params,
                x_scaler,
            },
        },
        epochs_run,
    })
}
