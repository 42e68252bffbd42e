//! Benchmark harness: generates splits, fits each method, draws conditional
//! samples at test points, scores them against the ground-truth oracles, and
//! aggregates over independent runs.
//!
//! Seeding: data splits depend only on `(base_seed, model, run)`, so every
//! method sees the same data; method randomness (initialization, training,
//! sampling) is derived from `(base_seed, model, method, run)` so changing
//! one method's settings never perturbs another's results.

pub mod cli;
pub mod report;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate, DataModelId, Dataset, Oracle};
use crate::ddpm;
use crate::error::{Error, Result};
use crate::gcds;
use crate::matrix::Matrix;
use crate::metrics::{mse_mean, mse_sd, sliced_w1, w1_empirical};
use crate::nn::StepSchedule;
use crate::rng::{derive_seed, derive_seed_indexed, fnv1a};
use crate::sampler::{ConditionalSampler, OracleSampler};
use crate::series_cde::{
    fit_deepcde, fit_flexcode, forest::ForestParams, CosineBasis, DeepCdeConfig, Regressor,
};
use crate::single_index::{
    build_model, fit_direction, select_bandwidths, Bandwidths, CriterionCaps, SphereGrid,
};

pub use report::{emit_csv, emit_markdown, parse_csv, CsvRow};

/// Estimation method identifiers. `Oracle` is the built-in perfect sampler
/// used to measure the protocol's Monte Carlo noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HallYao,
    Flexcode,
    Deepcde,
    Gcds,
    Ddpm,
    Oracle,
}

impl Method {
    /// The five benchmark methods, in report order.
    pub const BENCH: [Method; 5] = [
        Method::HallYao,
        Method::Flexcode,
        Method::Deepcde,
        Method::Gcds,
        Method::Ddpm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::HallYao => "hall_yao",
            Method::Flexcode => "flexcode",
            Method::Deepcde => "deepcde",
            Method::Gcds => "gcds",
            Method::Ddpm => "ddpm",
            Method::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        [
            Method::HallYao,
            Method::Flexcode,
            Method::Deepcde,
            Method::Gcds,
            Method::Ddpm,
            Method::Oracle,
        ]
        .into_iter()
        .find(|m| m.name() == lower)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown method `{s}`; valid: hall_yao, flexcode, deepcde, gcds, ddpm, oracle"
            ))
        })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hall-Yao settings: bandwidth grids, optimizer restarts, resource caps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HallYaoRunConfig {
    pub h_grid: Vec<f64>,
    /// Offsets added to `h` to form the final-stage bandwidth candidates.
    pub h_offsets: Vec<f64>,
    pub max_bandwidth: f64,
    /// Fixed `(h, H)` pair; skips the grid search.
    pub fixed: Option<[f64; 2]>,
    pub restarts: usize,
    pub selection_restarts: usize,
    pub selection_samples: usize,
    pub mem_cap_bytes: u64,
    pub op_cap: u64,
    pub enum_cap: u64,
}

impl Default for HallYaoRunConfig {
    fn default() -> Self {
        let caps = CriterionCaps::default();
        HallYaoRunConfig {
            h_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.1],
            h_offsets: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.1],
            max_bandwidth: 1.2,
            fixed: None,
            restarts: 10,
            selection_restarts: 4,
            selection_samples: 500,
            mem_cap_bytes: caps.mem_cap_bytes,
            op_cap: caps.op_cap,
            enum_cap: caps.enum_cap,
        }
    }
}

impl HallYaoRunConfig {
    fn caps(&self) -> CriterionCaps {
        CriterionCaps {
            mem_cap_bytes: self.mem_cap_bytes,
            op_cap: self.op_cap,
            enum_cap: self.enum_cap,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FlexcodeRunConfig {
    pub j_max: usize,
    /// `forest` or `knn`.
    pub regressor: String,
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub knn_k: Option<usize>,
}

impl Default for FlexcodeRunConfig {
    fn default() -> Self {
        FlexcodeRunConfig {
            j_max: 31,
            regressor: "forest".into(),
            n_trees: 100,
            min_leaf: 5,
            max_depth: None,
            knn_k: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepcdeRunConfig {
    pub j_max: usize,
    pub lr: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
}

impl Default for DeepcdeRunConfig {
    fn default() -> Self {
        DeepcdeRunConfig {
            j_max: 31,
            lr: 1e-4,
            patience: 20,
            max_epochs: 500,
            batch_size: 128,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GcdsRunConfig {
    /// Defaults to 3 for univariate responses, 10 for the multivariate model.
    pub latent_dim: Option<usize>,
    /// Defaults to 1e-4, or 3e-4 for the multivariate model.
    pub lr: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub disc_steps_per_gen: usize,
}

impl Default for GcdsRunConfig {
    fn default() -> Self {
        GcdsRunConfig {
            latent_dim: None,
            lr: None,
            epochs: 500,
            batch_size: 128,
            disc_steps_per_gen: 1,
        }
    }
}

impl GcdsRunConfig {
    fn resolve(&self, model: DataModelId) -> gcds::GcdsConfig {
        let multivariate = model.q() > 1;
        let lr = self.lr.unwrap_or(if multivariate { 3e-4 } else { 1e-4 });
        gcds::GcdsConfig {
            latent_dim: self.latent_dim.unwrap_or(if multivariate { 10 } else { 3 }),
            lr_gen: lr,
            lr_disc: lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            disc_steps_per_gen: self.disc_steps_per_gen,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpmRunConfig {
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epochs: usize,
    pub initial_lr: f64,
    pub drop_factor: f64,
    pub drop_every: usize,
    pub batch_size: usize,
}

impl Default for DdpmRunConfig {
    fn default() -> Self {
        DdpmRunConfig {
            t_steps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
            epochs: 50,
            initial_lr: 1e-2,
            drop_factor: 0.5,
            drop_every: 10,
            batch_size: 128,
        }
    }
}

impl DdpmRunConfig {
    fn resolve(&self) -> Result<ddpm::DdpmConfig> {
        Ok(ddpm::DdpmConfig {
            t_steps: self.t_steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            epochs: self.epochs,
            lr_schedule: StepSchedule::new(self.initial_lr, self.drop_factor, self.drop_every)?,
            batch_size: self.batch_size,
        })
    }
}

/// One benchmark configuration: a data model, a method set, sizes, and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: DataModelId,
    pub methods: Vec<Method>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_cond_samples: usize,
    pub runs: usize,
    pub base_seed: u64,
    /// Uniform multiplier on the four sizes; recorded in every report.
    pub scale_factor: f64,
    /// Projections for the sliced distance on multivariate responses.
    pub n_proj: usize,
    pub hall_yao: HallYaoRunConfig,
    pub flexcode: FlexcodeRunConfig,
    pub deepcde: DeepcdeRunConfig,
    pub gcds: GcdsRunConfig,
    pub ddpm: DdpmRunConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: DataModelId::M1,
            methods: Method::BENCH.to_vec(),
            n_train: 5000,
            n_val: 2000,
            n_test: 2000,
            n_cond_samples: 2000,
            runs: 10,
            base_seed: 7,
            scale_factor: 1.0,
            n_proj: 50,
            hall_yao: HallYaoRunConfig::default(),
            flexcode: FlexcodeRunConfig::default(),
            deepcde: DeepcdeRunConfig::default(),
            gcds: GcdsRunConfig::default(),
            ddpm: DdpmRunConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be nonempty".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.scale_factor <= 0.0 {
            return Err(Error::Config("scale_factor must be positive".into()));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 || self.n_cond_samples == 0 {
            return Err(Error::Config("all sample sizes must be >= 1".into()));
        }
        if let Some([h, cb]) = self.hall_yao.fixed {
            if !(h > 0.0 && cb > h) {
                return Err(Error::Config(format!(
                    "fixed hall_yao bandwidths need 0 < h < H, got h={h}, H={cb}"
                )));
            }
        }
        Ok(())
    }

    fn scaled(&self, n: usize) -> usize {
        ((n as f64 * self.scale_factor).round() as usize).max(1)
    }

    pub fn effective_n_train(&self) -> usize {
        self.scaled(self.n_train)
    }
    pub fn effective_n_val(&self) -> usize {
        self.scaled(self.n_val)
    }
    pub fn effective_n_test(&self) -> usize {
        self.scaled(self.n_test)
    }
    pub fn effective_n_cond(&self) -> usize {
        self.scaled(self.n_cond_samples)
    }

    /// Loads a flat JSON document whose keys mirror the field names.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad config JSON: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

/// Seed for one (model, method, run) cell: `base ^ hash(model, method, run)`.
fn method_seed(base: u64, model: DataModelId, method: Method, run: usize) -> u64 {
    let label = format!("{}/{}/{}", model.name(), method.name(), run);
    base ^ fnv1a(label.as_bytes())
}

fn data_seed(base: u64, model: DataModelId, split: &str, run: usize) -> u64 {
    let label = format!("{}/data/{}/{}", model.name(), split, run);
    base ^ fnv1a(label.as_bytes())
}

/// Per-run evaluation record.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub w1: f64,
    pub train_time_s: f64,
    pub sample_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub model: DataModelId,
    pub method: Method,
    pub run: usize,
    pub outcome: std::result::Result<MetricsReport, String>,
    pub epoch_time_s: Option<f64>,
}

/// Why a method was excluded for a model before any run started.
#[derive(Debug, Clone)]
pub struct SkipNote {
    pub model: DataModelId,
    pub method: Method,
    pub reason: String,
}

/// Aggregated mean/std per metric for one (model, method) cell.
#[derive(Debug, Clone)]
pub struct CellStats {
    pub model: DataModelId,
    pub method: Method,
    pub completed_runs: usize,
    /// `(metric, mean, std, unit)` in report order.
    pub metrics: Vec<(String, f64, f64, String)>,
}

#[derive(Debug, Clone)]
pub struct TableMeta {
    pub scale_factor: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_cond_samples: usize,
    pub runs: usize,
    pub n_proj: usize,
    pub base_seed: u64,
}

/// Full benchmark output: aggregated cells plus run-level diagnostics.
#[derive(Debug, Clone)]
pub struct ReportTable {
    pub meta: TableMeta,
    pub cells: Vec<CellStats>,
    pub rows: Vec<ResultRow>,
    pub skipped: Vec<SkipNote>,
    pub warnings: Vec<String>,
}

impl ReportTable {
    /// Merges per-model tables produced under the same configuration.
    pub fn merge(mut tables: Vec<ReportTable>) -> Option<ReportTable> {
        let first = tables.first()?.meta.clone();
        let mut out = ReportTable {
            meta: first,
            cells: Vec::new(),
            rows: Vec::new(),
            skipped: Vec::new(),
            warnings: Vec::new(),
        };
        for t in tables.drain(..) {
            out.cells.extend(t.cells);
            out.rows.extend(t.rows);
            out.skipped.extend(t.skipped);
            out.warnings.extend(t.warnings);
        }
        Some(out)
    }

    pub fn cell(&self, model: DataModelId, method: Method) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.model == model && c.method == method)
    }
}

/// Checks whether a method can run on a model at all; returns the reason
/// when it cannot: the single-index method needs a univariate response and
/// a sphere grid that fits in memory, and the series methods need a
/// univariate response.
pub fn method_feasibility(method: Method, model: DataModelId, config: &RunConfig) -> Option<String> {
    match method {
        Method::HallYao => {
            if model.q() != 1 {
                return Some("single-index estimator supports only univariate responses".into());
            }
            let candidates: Vec<f64> = match config.hall_yao.fixed {
                Some([h, _]) => vec![h],
                None => config.hall_yao.h_grid.clone(),
            };
            let feasible_h = candidates.iter().any(|&h| {
                SphereGrid::cartesian(model.p(), h, 1.0, config.hall_yao.mem_cap_bytes).is_ok()
            });
            if !feasible_h {
                return Some(format!(
                    "sphere grid exceeds the memory cap for every candidate h at p={}",
                    model.p()
                ));
            }
            None
        }
        Method::Flexcode | Method::Deepcde => {
            if model.q() != 1 {
                Some("series estimators support only univariate responses".into())
            } else {
                None
            }
        }
        Method::Gcds | Method::Ddpm | Method::Oracle => None,
    }
}

struct FitOutcome {
    sampler: Box<dyn ConditionalSampler>,
    epochs_run: Option<usize>,
    warnings: Vec<String>,
}

fn fit_method(
    method: Method,
    config: &RunConfig,
    train: &Dataset,
    val: &Dataset,
    hy_bandwidths: Option<Bandwidths>,
    seed: u64,
) -> Result<FitOutcome> {
    match method {
        Method::Ddpm => {
            let model = ddpm::train(train, &config.ddpm.resolve()?, seed)?;
            let epochs = model.epochs_run;
            Ok(FitOutcome {
                sampler: Box::new(model),
                epochs_run: Some(epochs),
                warnings: Vec::new(),
            })
        }
        Method::Gcds => {
            let model = gcds::train(train, &config.gcds.resolve(train.model), seed)?;
            let mut warnings = Vec::new();
            if model.instability_warning() {
                warnings.push(format!(
                    "gcds on {}: exp clamp hit in {}/{} steps",
                    train.model, model.overflow_steps, model.total_steps
                ));
            }
            let epochs = model.epochs_run;
            Ok(FitOutcome {
                sampler: Box::new(model),
                epochs_run: Some(epochs),
                warnings,
            })
        }
        Method::Deepcde => {
            let basis = CosineBasis::new(config.deepcde.j_max)?;
            let dc = DeepCdeConfig {
                lr: config.deepcde.lr,
                patience: config.deepcde.patience,
                max_epochs: config.deepcde.max_epochs,
                batch_size: config.deepcde.batch_size,
            };
            let fit = fit_deepcde(train, val, basis, &dc, seed)?;
            Ok(FitOutcome {
                sampler: Box::new(fit.model),
                epochs_run: Some(fit.epochs_run),
                warnings: Vec::new(),
            })
        }
        Method::Flexcode => {
            let basis = CosineBasis::new(config.flexcode.j_max)?;
            let regressor = match config.flexcode.regressor.as_str() {
                "forest" => Regressor::Forest(ForestParams {
                    n_trees: config.flexcode.n_trees,
                    min_leaf: config.flexcode.min_leaf,
                    max_depth: config.flexcode.max_depth,
                    mtry: None,
                }),
                "knn" => Regressor::Knn { k: config.flexcode.knn_k },
                other => {
                    return Err(Error::Config(format!(
                        "unknown flexcode regressor `{other}`; use `forest` or `knn`"
                    )))
                }
            };
            let model = fit_flexcode(train, val, basis, &regressor, seed)?;
            Ok(FitOutcome {
                sampler: Box::new(model),
                epochs_run: None,
                warnings: Vec::new(),
            })
        }
        Method::HallYao => {
            let bw = hy_bandwidths
                .ok_or_else(|| Error::Selection("no bandwidths available".into()))?;
            let caps = config.hall_yao.caps();
            let grid = SphereGrid::cartesian(train.x.cols(), bw.h, 1.0, caps.mem_cap_bytes)?;
            let v_hat = fit_direction(
                train,
                bw.h,
                &grid,
                &caps,
                config.hall_yao.restarts,
                derive_seed(seed, "hy-direction"),
            )?;
            let model = build_model(train, v_hat, bw.cdf_bandwidth)?;
            Ok(FitOutcome {
                sampler: Box::new(model),
                epochs_run: None,
                warnings: Vec::new(),
            })
        }
        Method::Oracle => Ok(FitOutcome {
            sampler: Box::new(OracleSampler(Oracle::new(train.model))),
            epochs_run: None,
            warnings: Vec::new(),
        }),
    }
}

/// Draws conditional samples at every test point and scores them.
fn evaluate_sampler(
    sampler: &dyn ConditionalSampler,
    oracle: &Oracle,
    test: &Dataset,
    n_cond: usize,
    n_proj: usize,
    draw_seed: u64,
    ref_seed: u64,
) -> Result<(f64, f64, f64, f64)> {
    let k = test.n();
    let q = test.y.cols();

    // Timed sampling pass.
    let t0 = Instant::now();
    let samples: Vec<Matrix> = (0..k)
        .into_par_iter()
        .map(|i| sampler.sample_at(test.x.row(i), n_cond, derive_seed_indexed(draw_seed, "draw", i as u64)))
        .collect::<Result<Vec<Matrix>>>()?;
    let sample_time_s = t0.elapsed().as_secs_f64();

    // Moment estimates and distances per test point.
    struct PointScore {
        mean: Vec<f64>,
        sd: Vec<f64>,
        w1: f64,
    }
    let scores: Vec<PointScore> = (0..k)
        .into_par_iter()
        .map(|i| -> Result<PointScore> {
            let s = &samples[i];
            let mut mean = vec![0.0; q];
            for r in 0..n_cond {
                for (m, &v) in mean.iter_mut().zip(s.row(r)) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= n_cond as f64;
            }
            let mut sd = vec![0.0; q];
            for r in 0..n_cond {
                for (c, (&m, &v)) in mean.iter().zip(s.row(r)).enumerate() {
                    sd[c] += (v - m) * (v - m);
                }
            }
            for v in &mut sd {
                *v = (*v / (n_cond as f64 - 1.0).max(1.0)).sqrt();
            }
            let reference = oracle.cond_sample(
                test.x.row(i),
                n_cond,
                derive_seed_indexed(ref_seed, "ref", i as u64),
            );
            let w1 = if q == 1 {
                w1_empirical(s.data(), reference.data())?
            } else {
                sliced_w1(s, &reference, n_proj, derive_seed_indexed(ref_seed, "proj", i as u64))?
            };
            Ok(PointScore { mean, sd, w1 })
        })
        .collect::<Result<Vec<PointScore>>>()?;

    let mut est_mean = Matrix::zeros(k, q);
    let mut est_sd = Matrix::zeros(k, q);
    let mut true_mean = Matrix::zeros(k, q);
    let mut true_sd = Matrix::zeros(k, q);
    for i in 0..k {
        est_mean.row_mut(i).copy_from_slice(&scores[i].mean);
        est_sd.row_mut(i).copy_from_slice(&scores[i].sd);
        true_mean.row_mut(i).copy_from_slice(&oracle.cond_mean(test.x.row(i)));
        true_sd.row_mut(i).copy_from_slice(&oracle.cond_std(test.x.row(i)));
    }
    let mse_m = mse_mean(&est_mean, &true_mean)?;
    let mse_s = mse_sd(&est_sd, &true_sd)?;
    let w1 = scores.iter().map(|s| s.w1).sum::<f64>() / k as f64;
    Ok((mse_m, mse_s, w1, sample_time_s))
}

/// Runs the full protocol for one model: per feasible method, `runs`
/// independent train/fit/sample/score cycles, aggregated into a table.
/// A method failure in one run is recorded and the remaining runs continue.
pub fn run_experiment(config: &RunConfig) -> Result<ReportTable> {
    config.validate()?;
    let model = config.model;
    let oracle = Oracle::new(model);
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    let mut rows = Vec::new();

    let active: Vec<Method> = config
        .methods
        .iter()
        .copied()
        .filter(|&m| match method_feasibility(m, model, config) {
            Some(reason) => {
                skipped.push(SkipNote { model, method: m, reason });
                false
            }
            None => true,
        })
        .collect();

    for &method in &active {
        // The single-index bandwidth pair is chosen once per model on a
        // dedicated split, then held fixed across runs.
        let mut hy_bandwidths: Option<Bandwidths> = None;
        let mut hy_failure: Option<String> = None;
        if method == Method::HallYao {
            match config.hall_yao.fixed {
                Some([h, cb]) => hy_bandwidths = Some(Bandwidths { h, cdf_bandwidth: cb }),
                None => {
                    let sel_train = generate(
                        model,
                        config.effective_n_train(),
                        data_seed(config.base_seed, model, "hy-select-train", 0),
                    )?;
                    let sel_val = generate(
                        model,
                        config.effective_n_val(),
                        data_seed(config.base_seed, model, "hy-select-val", 0),
                    )?;
                    match select_bandwidths(
                        &sel_train,
                        &sel_val,
                        &config.hall_yao.h_grid,
                        &config.hall_yao.h_offsets,
                        config.hall_yao.max_bandwidth,
                        &config.hall_yao.caps(),
                        config.hall_yao.selection_restarts,
                        config.hall_yao.selection_samples.min(config.effective_n_cond()),
                        method_seed(config.base_seed, model, method, usize::MAX),
                    ) {
                        Ok(sel) => {
                            warnings.push(format!(
                                "hall_yao on {model}: selected h={}, H={}",
                                sel.best.h, sel.best.cdf_bandwidth
                            ));
                            hy_bandwidths = Some(sel.best);
                        }
                        Err(e) => hy_failure = Some(e.to_string()),
                    }
                }
            }
        }

        for run in 0..config.runs {
            if let Some(reason) = &hy_failure {
                rows.push(ResultRow {
                    model,
                    method,
                    run,
                    outcome: Err(reason.clone()),
                    epoch_time_s: None,
                });
                continue;
            }
            let row = run_once(config, method, run, hy_bandwidths, &oracle, &mut warnings);
            rows.push(row);
        }
    }

    let cells = aggregate(model, &active, &rows);
    Ok(ReportTable {
        meta: TableMeta {
            scale_factor: config.scale_factor,
            n_train: config.effective_n_train(),
            n_val: config.effective_n_val(),
            n_test: config.effective_n_test(),
            n_cond_samples: config.effective_n_cond(),
            runs: config.runs,
            n_proj: config.n_proj,
            base_seed: config.base_seed,
        },
        cells,
        rows,
        skipped,
        warnings,
    })
}

fn run_once(
    config: &RunConfig,
    method: Method,
    run: usize,
    hy_bandwidths: Option<Bandwidths>,
    oracle: &Oracle,
    warnings: &mut Vec<String>,
) -> ResultRow {
    let model = config.model;
    let seed = method_seed(config.base_seed, model, method, run);
    let mut fit_warnings: Vec<String> = Vec::new();
    let attempt = |fit_warnings: &mut Vec<String>| -> Result<(MetricsReport, Option<f64>)> {
        let train = generate(
            model,
            config.effective_n_train(),
            data_seed(config.base_seed, model, "train", run),
        )?;
        let val = generate(
            model,
            config.effective_n_val(),
            data_seed(config.base_seed, model, "val", run),
        )?;
        let test = generate(
            model,
            config.effective_n_test(),
            data_seed(config.base_seed, model, "test", run),
        )?;

        let t0 = Instant::now();
        let fit = fit_method(method, config, &train, &val, hy_bandwidths, seed)?;
        let train_time_s = t0.elapsed().as_secs_f64();
        let epoch_time_s = fit
            .epochs_run
            .filter(|&e| e > 0)
            .map(|e| train_time_s / e as f64);
        fit_warnings.extend(fit.warnings.iter().cloned());

        let (mse_mean, mse_sd, w1, sample_time_s) = evaluate_sampler(
            fit.sampler.as_ref(),
            oracle,
            &test,
            config.effective_n_cond(),
            config.n_proj,
            derive_seed(seed, "sampling"),
            data_seed(config.base_seed, model, "reference", run),
        )?;
        Ok((
            MetricsReport { mse_mean, mse_sd, w1, train_time_s, sample_time_s },
            epoch_time_s,
        ))
    };
    let outcome = attempt(&mut fit_warnings);
    warnings.append(&mut fit_warnings);
    match outcome {
        Ok((report, epoch_time_s)) => ResultRow {
            model,
            method,
            run,
            outcome: Ok(report),
            epoch_time_s,
        },
        Err(e) => {
            warnings.push(format!("{method} on {model} run {run} failed: {e}"));
            ResultRow {
                model,
                method,
                run,
                outcome: Err(e.to_string()),
                epoch_time_s: None,
            }
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}

fn aggregate(model: DataModelId, methods: &[Method], rows: &[ResultRow]) -> Vec<CellStats> {
    methods
        .iter()
        .map(|&method| {
            let completed: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.method == method && r.outcome.is_ok())
                .collect();
            let pull = |f: &dyn Fn(&MetricsReport) -> f64| -> Vec<f64> {
                completed
                    .iter()
                    .map(|r| f(r.outcome.as_ref().expect("filtered to ok")))
                    .collect()
            };
            let mut metrics = Vec::new();
            for (name, values, unit) in [
                ("mse_mean", pull(&|m| m.mse_mean), "none"),
                ("mse_sd", pull(&|m| m.mse_sd), "none"),
                ("w1", pull(&|m| m.w1), "none"),
                ("train_time_s", pull(&|m| m.train_time_s), "s"),
                ("sample_time_s", pull(&|m| m.sample_time_s), "s"),
            ] {
                let (mean, std) = mean_std(&values);
                metrics.push((name.to_string(), mean, std, unit.to_string()));
            }
            let epoch_times: Vec<f64> = completed.iter().filter_map(|r| r.epoch_time_s).collect();
            if !epoch_times.is_empty() {
                let (mean, std) = mean_std(&epoch_times);
                metrics.push(("epoch_time_s".to_string(), mean, std, "s".to_string()));
            }
            CellStats {
                model,
                method,
                completed_runs: completed.len(),
                metrics,
            }
        })
        .collect()
}

/// Caps the global worker pool from `CDE_BENCH_THREADS`, once.
pub fn init_thread_cap() {
    if let Ok(v) = std::env::var("CDE_BENCH_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
