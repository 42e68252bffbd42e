//! Single-index conditional CDF estimation.
//!
//! The direction `v` is estimated by minimizing a sphere-indexed criterion
//! that compares, over a Cartesian grid of spheres `A`, the leave-one-out
//! empirical joint probability `F(A, y)` with the sphere-average of a
//! leave-two-out local-linear conditional CDF smoothed along the projection
//! `v^T x`. Given the direction, the conditional CDF at a query point is a
//! full-sample local-linear fit on the projection, monotone-rearranged and
//! inverted for sampling.
//!
//! The criterion is expensive; evaluation is organized so that one pass per
//! target point yields the local-linear estimate at every response threshold
//! via prefix sums in response rank order, and sphere sums reuse those rows.

mod neldermead;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed_indexed, rng_from_seed};
use crate::series_cde::invert_cdf;
use neldermead::{minimize, NmOptions};

/// Kernel weights below this count as zero support.
const MIN_WEIGHT: f64 = 1e-12;

/// Unit vector normalized so its first nonzero component is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDirection(Vec<f64>);

impl UnitDirection {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Argument("direction must be nonzero and finite".into()));
        }
        let mut unit: Vec<f64> = v.iter().map(|&x| x / norm).collect();
        if let Some(&first) = unit.iter().find(|&&x| x.abs() > 1e-12) {
            if first < 0.0 {
                for x in &mut unit {
                    *x = -*x;
                }
            }
        }
        Ok(UnitDirection(unit))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&a, &b)| a * b).sum()
    }
}

/// Cartesian grid of sphere centers in `[-radius, radius]^p` with fixed
/// sphere radius.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    axis: Vec<f64>,
    p: usize,
    pub radius: f64,
    pub spacing: f64,
}

impl SphereGrid {
    /// Builds the grid after checking that materializing it (and the
    /// per-sphere bookkeeping) stays under `mem_cap_bytes`.
    pub fn cartesian(p: usize, spacing: f64, radius: f64, mem_cap_bytes: u64) -> Result<Self> {
        if p == 0 || spacing <= 0.0 || radius <= 0.0 {
            return Err(Error::Config("sphere grid needs p >= 1, spacing > 0, radius > 0".into()));
        }
        let mut axis = Vec::new();
        let mut coord = -radius;
        while coord <= radius + 1e-9 {
            axis.push(coord);
            coord += spacing;
        }
        let bytes = (axis.len() as f64).powi(p as i32) * p as f64 * 8.0;
        if bytes > mem_cap_bytes as f64 {
            return Err(Error::InfeasibleDimension(format!(
                "sphere grid for p={p}, spacing={spacing} needs {bytes:.3e} bytes (cap {mem_cap_bytes})"
            )));
        }
        Ok(SphereGrid { axis, p, radius, spacing })
    }

    /// Total number of grid centers.
    pub fn len(&self) -> usize {
        self.axis.len().pow(self.p as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bandwidth pair: `h` for the direction stage, `cdf_bandwidth` for the
/// final CDF stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidths {
    pub h: f64,
    pub cdf_bandwidth: f64,
}

/// Local-linear estimate of `P(Y <= y0 | U = u0)` from `(u, y)` pairs with a
/// Gaussian kernel, clamped to `[0, 1]`.
///
/// Fails with a degenerate-neighborhood error when fewer than two distinct
/// `u` values carry kernel weight above `1e-12`; callers fall back to a
/// local-constant estimate at such points.
pub fn local_linear_cdf(pairs: &[(f64, f64)], bandwidth: f64, u0: f64, y0: f64) -> Result<f64> {
    if bandwidth <= 0.0 {
        return Err(Error::Argument("bandwidth must be positive".into()));
    }
    let mut distinct: Vec<f64> = Vec::new();
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let (mut t0, mut t1) = (0.0, 0.0);
    for &(u, y) in pairs {
        let d = (u - u0) / bandwidth;
        let k = (-0.5 * d * d).exp();
        if k > MIN_WEIGHT && !distinct.iter().any(|&x| x == u) {
            distinct.push(u);
        }
        let du = u - u0;
        s0 += k;
        s1 += k * du;
        s2 += k * du * du;
        if y <= y0 {
            t0 += k;
            t1 += k * du;
        }
    }
    if distinct.len() < 2 {
        return Err(Error::DegenerateNeighborhood { u0, min_weight: MIN_WEIGHT });
    }
    let denom = s0 * s2 - s1 * s1;
    if denom <= f64::EPSILON * s0 * s2 {
        return Err(Error::DegenerateNeighborhood { u0, min_weight: MIN_WEIGHT });
    }
    Ok(((t0 * s2 - t1 * s1) / denom).clamp(0.0, 1.0))
}

/// Precomputed, direction-independent pieces of the criterion: sphere
/// membership, the leave-one-out empirical joint term per sphere, and the
/// response rank order.
pub struct CriterionWorkspace<'a> {
    data: &'a Dataset,
    h: f64,
    grid_len: usize,
    /// Row indices per nonempty sphere.
    members: Vec<Vec<u32>>,
    /// `F_hat_{-j}(A, Y_j)` per nonempty sphere per `j`.
    term1: Vec<Vec<f64>>,
    /// Point indices in ascending response order.
    y_order: Vec<u32>,
    /// `rank_of[i]` = number of responses `<= Y_i`.
    rank_of: Vec<u32>,
    /// Points belonging to at least one sphere.
    covered: Vec<u32>,
}

/// Resource guards for criterion evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CriterionCaps {
    /// Cap on grid (and bookkeeping) memory in bytes.
    pub mem_cap_bytes: u64,
    /// Cap on per-evaluation work, measured as (total sphere members) x n.
    pub op_cap: u64,
    /// Cap on membership-enumeration candidates.
    pub enum_cap: u64,
}

impl Default for CriterionCaps {
    fn default() -> Self {
        CriterionCaps {
            mem_cap_bytes: 2 * 1024 * 1024 * 1024,
            op_cap: 400_000_000,
            enum_cap: 200_000_000,
        }
    }
}

impl<'a> CriterionWorkspace<'a> {
    pub fn build(data: &'a Dataset, h: f64, grid: &SphereGrid, caps: &CriterionCaps) -> Result<Self> {
        if data.y.cols() != 1 {
            return Err(Error::UnsupportedModel(
                "the single-index criterion needs a univariate response".into(),
            ));
        }
        let n = data.n();
        let p = data.x.cols();
        if p != grid.p {
            return Err(Error::Dimension(format!(
                "grid dimension {} vs data dimension {p}",
                grid.p
            )));
        }

        // Candidate count before enumerating: axis coordinates within
        // radius of each coordinate of each point.
        let axis = &grid.axis;
        let step = grid.spacing;
        let first = axis[0];
        let ranges = |x: &[f64]| -> Option<Vec<(usize, usize)>> {
            let mut out = Vec::with_capacity(p);
            for &xd in x {
                let lo = ((xd - grid.radius - first) / step).ceil().max(0.0) as usize;
                let hi = ((xd + grid.radius - first) / step).floor();
                if hi < 0.0 || lo >= axis.len() {
                    return None;
                }
                let hi = (hi as usize).min(axis.len() - 1);
                if lo > hi {
                    return None;
                }
                out.push((lo, hi));
            }
            Some(out)
        };
        let mut total_candidates: u64 = 0;
        for i in 0..n {
            if let Some(r) = ranges(data.x.row(i)) {
                let count: u64 = r.iter().map(|(lo, hi)| (hi - lo + 1) as u64).product();
                total_candidates = total_candidates.saturating_add(count);
            }
        }
        if total_candidates > caps.enum_cap {
            return Err(Error::InfeasibleDimension(format!(
                "sphere membership enumeration needs {total_candidates} candidate checks (cap {})",
                caps.enum_cap
            )));
        }

        // Enumerate memberships as (sphere index, point index) pairs.
        let r2 = grid.radius * grid.radius;
        let mut pairs: Vec<(u64, u32)> = Vec::new();
        let max_pairs = (caps.op_cap / n.max(1) as u64).max(1);
        for i in 0..n {
            let x = data.x.row(i);
            let Some(r) = ranges(x) else { continue };
            // Mixed-radix walk over the candidate box.
            let mut idx: Vec<usize> = r.iter().map(|&(lo, _)| lo).collect();
            'walk: loop {
                let mut dist2 = 0.0;
                let mut flat: u64 = 0;
                for d in 0..p {
                    let c = axis[idx[d]];
                    dist2 += (x[d] - c) * (x[d] - c);
                    flat = flat * axis.len() as u64 + idx[d] as u64;
                }
                if dist2 <= r2 {
                    pairs.push((flat, i as u32));
                    if pairs.len() as u64 > max_pairs {
                        return Err(Error::InfeasibleDimension(format!(
                            "criterion would need more than {} member-point products per evaluation (op cap {})",
                            max_pairs * n as u64,
                            caps.op_cap
                        )));
                    }
                }
                for d in (0..p).rev() {
                    idx[d] += 1;
                    if idx[d] <= r[d].1 {
                        continue 'walk;
                    }
                    idx[d] = r[d].0;
                    if d == 0 {
                        break 'walk;
                    }
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::CriterionUndefined);
        }
        pairs.sort_unstable();
        let mut members: Vec<Vec<u32>> = Vec::new();
        let mut current: Option<u64> = None;
        for (sphere, point) in pairs {
            if current != Some(sphere) {
                members.push(Vec::new());
                current = Some(sphere);
            }
            members.last_mut().expect("just pushed").push(point);
        }

        let term1_bytes = members.len() as u64 * n as u64 * 8;
        if term1_bytes > caps.mem_cap_bytes {
            return Err(Error::InfeasibleDimension(format!(
                "per-sphere empirical terms need {term1_bytes} bytes (cap {})",
                caps.mem_cap_bytes
            )));
        }

        // Response ranks.
        let mut y_order: Vec<u32> = (0..n as u32).collect();
        let y = data.y.col(0);
        y_order.sort_by(|&a, &b| y[a as usize].partial_cmp(&y[b as usize]).unwrap());
        let mut sorted_y: Vec<f64> = y_order.iter().map(|&i| y[i as usize]).collect();
        // Upper-bound rank handles ties consistently.
        let rank_of: Vec<u32> = (0..n)
            .map(|i| sorted_y.partition_point(|&v| v <= y[i]) as u32)
            .collect();
        sorted_y.clear();

        // Leave-one-out empirical joint term per sphere.
        let term1: Vec<Vec<f64>> = members
            .iter()
            .map(|m| {
                let mut member_ranks: Vec<u32> = m.iter().map(|&i| rank_of[i as usize]).collect();
                member_ranks.sort_unstable();
                let mut in_sphere = vec![false; n];
                for &i in m {
                    in_sphere[i as usize] = true;
                }
                (0..n)
                    .map(|j| {
                        let mut cnt =
                            member_ranks.partition_point(|&r| r <= rank_of[j]) as f64;
                        if in_sphere[j] {
                            cnt -= 1.0;
                        }
                        cnt / (n as f64 - 1.0)
                    })
                    .collect()
            })
            .collect();

        let mut covered = vec![false; n];
        for m in &members {
            for &i in m {
                covered[i as usize] = true;
            }
        }
        let covered: Vec<u32> = (0..n as u32).filter(|&i| covered[i as usize]).collect();

        Ok(CriterionWorkspace {
            data,
            h,
            grid_len: grid.len(),
            members,
            term1,
            y_order,
            rank_of,
            covered,
        })
    }

    /// Criterion value at a direction.
    pub fn eval(&self, v: &UnitDirection) -> f64 {
        let n = self.data.n();
        let nf = n as f64;
        let u: Vec<f64> = (0..n).map(|i| v.dot(self.data.x.row(i))).collect();

        // Local-linear rows: fr[i * n + j] holds the leave-(i,j)-out
        // estimate of F(Y_j | u_i). Only covered rows are filled.
        let mut fr = vec![0.0f64; n * n];
        {
            let covered = &self.covered;
            let rows: Vec<(u32, Vec<f64>)> = covered
                .par_iter()
                .map(|&i| (i, self.smoother_row(&u, i as usize)))
                .collect();
            for (i, row) in rows {
                fr[i as usize * n..(i as usize + 1) * n].copy_from_slice(&row);
            }
        }

        // Sphere sums.
        let per_sphere: Vec<f64> = self
            .members
            .par_iter()
            .zip(&self.term1)
            .map(|(m, t1)| {
                let mut p_a = vec![0.0f64; n];
                for &i in m {
                    let row = &fr[i as usize * n..(i as usize + 1) * n];
                    for (acc, &f) in p_a.iter_mut().zip(row) {
                        *acc += f;
                    }
                }
                for &i in m {
                    p_a[i as usize] -= fr[i as usize * n + i as usize];
                }
                let mut acc = 0.0;
                for (t, s) in t1.iter().zip(&p_a) {
                    let d = t - s / (nf - 1.0);
                    acc += d * d;
                }
                acc / nf
            })
            .collect();

        per_sphere.iter().sum::<f64>() / self.grid_len as f64
    }

    /// Leave-two-out local-linear estimates `F(Y_j | u_i)` for every `j`,
    /// with the diagonal holding the leave-one-out estimate at `j = i`.
    fn smoother_row(&self, u: &[f64], i: usize) -> Vec<f64> {
        let n = u.len();
        let nf = n as f64;
        let h = self.h;
        let u0 = u[i];
        let mut k = vec![0.0f64; n];
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let mut eff = 0usize;
        for (kk, (&uk, slot)) in u.iter().zip(k.iter_mut()).enumerate() {
            if kk == i {
                continue;
            }
            let z = (uk - u0) / h;
            let w = (-0.5 * z * z).exp();
            *slot = w;
            let du = uk - u0;
            s0 += w;
            s1 += w * du;
            s2 += w * du * du;
            if w > MIN_WEIGHT {
                eff += 1;
            }
        }

        // Prefix sums in response rank order.
        let mut cum0 = vec![0.0f64; n + 1];
        let mut cum1 = vec![0.0f64; n + 1];
        for (pos, &idx) in self.y_order.iter().enumerate() {
            let w = k[idx as usize];
            cum0[pos + 1] = cum0[pos] + w;
            cum1[pos + 1] = cum1[pos] + w * (u[idx as usize] - u0);
        }

        let rank_i = self.rank_of[i] as usize;
        (0..n)
            .map(|j| {
                let rank_j = self.rank_of[j] as usize;
                if j == i {
                    // Leave-one-out estimate at the diagonal.
                    let t0 = cum0[rank_i];
                    let t1 = cum1[rank_i];
                    let fallback = (rank_i as f64 - 1.0) / (nf - 1.0);
                    return ll_value(t0, t1, s0, s1, s2, eff, fallback);
                }
                let kj = k[j];
                let duj = u[j] - u0;
                let s0p = s0 - kj;
                let s1p = s1 - kj * duj;
                let s2p = s2 - kj * duj * duj;
                let t0p = cum0[rank_j] - kj;
                let t1p = cum1[rank_j] - kj * duj;
                let effp = eff - usize::from(kj > MIN_WEIGHT);
                let below = f64::from(u8::from(self.rank_of[j] >= self.rank_of[i] && i != j));
                // Leave-two-out empirical CDF as the last-resort fallback.
                let fallback = (rank_j as f64 - 1.0 - below) / (nf - 2.0);
                ll_value(t0p, t1p, s0p, s1p, s2p, effp, fallback)
            })
            .collect()
    }
}

/// Local-linear value with local-constant and empirical fallbacks.
#[inline]
fn ll_value(t0: f64, t1: f64, s0: f64, s1: f64, s2: f64, eff: usize, fallback: f64) -> f64 {
    if eff >= 2 {
        let denom = s0 * s2 - s1 * s1;
        if denom > f64::EPSILON * s0 * s2 {
            return ((t0 * s2 - t1 * s1) / denom).clamp(0.0, 1.0);
        }
    }
    if s0 > MIN_WEIGHT {
        (t0 / s0).clamp(0.0, 1.0)
    } else {
        fallback.clamp(0.0, 1.0)
    }
}

/// Sphere-criterion value `S(v)` averaged over the grid.
pub fn criterion_s(
    v: &UnitDirection,
    data: &Dataset,
    h: f64,
    grid: &SphereGrid,
    caps: &CriterionCaps,
) -> Result<f64> {
    let ws = CriterionWorkspace::build(data, h, grid, caps)?;
    Ok(ws.eval(v))
}

fn angles_to_unit(theta: &[f64]) -> Vec<f64> {
    let p = theta.len() + 1;
    let mut v = vec![0.0; p];
    let mut sin_prod = 1.0;
    for (k, &t) in theta.iter().enumerate() {
        v[k] = sin_prod * t.cos();
        sin_prod *= t.sin();
    }
    v[p - 1] = sin_prod;
    v
}

fn unit_to_angles(v: &[f64]) -> Vec<f64> {
    let p = v.len();
    let mut theta = Vec::with_capacity(p - 1);
    for k in 0..p - 1 {
        let tail: f64 = v[k + 1..].iter().map(|&x| x * x).sum::<f64>().sqrt();
        if k == p - 2 {
            theta.push(v[p - 1].atan2(v[p - 2]));
        } else {
            theta.push(tail.atan2(v[k]));
        }
    }
    theta
}

/// Estimates the index direction by Nelder-Mead over spherical coordinates
/// from `restarts` random starts, returning the best minimizer normalized
/// into the positive-leading-component convention.
pub fn fit_direction(
    data: &Dataset,
    h: f64,
    grid: &SphereGrid,
    caps: &CriterionCaps,
    restarts: usize,
    seed: u64,
) -> Result<UnitDirection> {
    let p = data.x.cols();
    if p == 1 {
        return UnitDirection::new(vec![1.0]);
    }
    let ws = CriterionWorkspace::build(data, h, grid, caps)?;
    let opts = NmOptions {
        max_evals: (30 * (p - 1)).clamp(40, 150),
        ..NmOptions::default()
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = rng_from_seed(derive_seed_indexed(seed, "restart", r as u64));
        let start: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let start = UnitDirection::new(start)?;
        let theta0 = unit_to_angles(start.as_slice());
        let objective = |theta: &[f64]| -> f64 {
            match UnitDirection::new(angles_to_unit(theta)) {
                Ok(v) => ws.eval(&v),
                Err(_) => f64::INFINITY,
            }
        };
        let (theta, value) = minimize(objective, &theta0, opts);
        if value.is_finite() && best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((theta, value));
        }
    }
    let (theta, _) = best.ok_or_else(|| {
        Error::Selection("criterion was non-finite at every optimizer start".into())
    })?;
    UnitDirection::new(angles_to_unit(&theta))
}

/// Fitted single-index model: direction, final-stage bandwidth, projected
/// training pairs, and the response grid used for inversion.
#[derive(Debug, Clone)]
pub struct SingleIndexModel {
    pub v_hat: UnitDirection,
    /// Final-stage smoothing bandwidth.
    pub cdf_bandwidth: f64,
    /// Training pairs `(u, y)` sorted by projection value.
    pub train_index: Vec<(f64, f64)>,
    pub y_grid: Vec<f64>,
    /// Pairs sorted by response, for rank-order prefix sums.
    by_response: Vec<(f64, f64)>,
}

/// Number of points in the response inversion grid.
pub const Y_GRID_POINTS: usize = 513;

/// Builds the conditional-CDF stage for a known direction.
pub fn build_model(train: &Dataset, v_hat: UnitDirection, cdf_bandwidth: f64) -> Result<SingleIndexModel> {
    if train.y.cols() != 1 {
        return Err(Error::UnsupportedModel(
            "single-index models support only a univariate response".into(),
        ));
    }
    if cdf_bandwidth <= 0.0 {
        return Err(Error::Argument("CDF bandwidth must be positive".into()));
    }
    let y = train.y.col(0);
    let mut train_index: Vec<(f64, f64)> = (0..train.n())
        .map(|i| (v_hat.dot(train.x.row(i)), y[i]))
        .collect();
    let mut by_response = train_index.clone();
    train_index.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    by_response.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

    let (y_min, y_max) = (by_response[0].1, by_response[by_response.len() - 1].1);
    let pad = 0.05 * (y_max - y_min).max(1e-9);
    let (lo, hi) = (y_min - pad, y_max + pad);
    let y_grid: Vec<f64> = (0..Y_GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (Y_GRID_POINTS - 1) as f64)
        .collect();
    Ok(SingleIndexModel {
        v_hat,
        cdf_bandwidth,
        train_index,
        y_grid,
        by_response,
    })
}

/// Direction search plus CDF stage in one call.
pub fn fit(
    train: &Dataset,
    bandwidths: Bandwidths,
    grid: &SphereGrid,
    caps: &CriterionCaps,
    restarts: usize,
    seed: u64,
) -> Result<SingleIndexModel> {
    let v_hat = fit_direction(train, bandwidths.h, grid, caps, restarts, seed)?;
    build_model(train, v_hat, bandwidths.cdf_bandwidth)
}

impl SingleIndexModel {
    /// Monotone-rearranged conditional CDF on `y_grid` at projection `u0`.
    pub fn cdf_at(&self, u0: f64) -> Vec<f64> {
        let n = self.by_response.len();
        let nf = n as f64;
        let h = self.cdf_bandwidth;
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let mut eff = 0usize;
        let mut cum0 = vec![0.0f64; n + 1];
        let mut cum1 = vec![0.0f64; n + 1];
        for (pos, &(u, _)) in self.by_response.iter().enumerate() {
            let z = (u - u0) / h;
            let w = (-0.5 * z * z).exp();
            let du = u - u0;
            s0 += w;
            s1 += w * du;
            s2 += w * du * du;
            if w > MIN_WEIGHT {
                eff += 1;
            }
            cum0[pos + 1] = cum0[pos] + w;
            cum1[pos + 1] = cum1[pos] + w * du;
        }
        let mut cdf: Vec<f64> = self
            .y_grid
            .iter()
            .map(|&g| {
                let count = self.by_response.partition_point(|&(_, y)| y <= g);
                let fallback = count as f64 / nf;
                ll_value(cum0[count], cum1[count], s0, s1, s2, eff, fallback)
            })
            .collect();
        // Monotone rearrangement repairs local-linear non-monotonicity.
        cdf.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cdf
    }

    /// Inverse-CDF sampling at a query point.
    pub fn sample(&self, x: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
        if x.len() != self.v_hat.as_slice().len() {
            return Err(Error::Dimension(format!(
                "query point has {} coordinates, model expects {}",
                x.len(),
                self.v_hat.as_slice().len()
            )));
        }
        let cdf = self.cdf_at(self.v_hat.dot(x));
        let mut rng = rng_from_seed(seed);
        Ok((0..n)
            .map(|_| invert_cdf(&self.y_grid, &cdf, rng.random()))
            .collect())
    }
}

/// Outcome of the bandwidth grid search.
#[derive(Debug)]
pub struct BandwidthSelection {
    pub best: Bandwidths,
    /// Direction fitted at the winning `h`.
    pub direction: UnitDirection,
    /// Mean validation Wasserstein distance per candidate pair.
    pub scores: Vec<(Bandwidths, f64)>,
    /// Candidates that failed, with reasons.
    pub failures: Vec<(f64, String)>,
}

/// Smallest-score candidate; ties keep the earlier (smaller-h) pair.
fn pick_best(scores: &[(Bandwidths, f64)]) -> Option<(Bandwidths, f64)> {
    scores
        .iter()
        .fold(None, |best: Option<(Bandwidths, f64)>, &(b, s)| match best {
            Some((_, bs)) if bs <= s => best,
            _ => Some((b, s)),
        })
}

/// Grid search over `(h, H)`: fit the direction once per feasible `h`, build
/// the CDF stage per `H`, and score each pair by the mean 1-Wasserstein
/// distance between model samples and exact conditional samples at the
/// validation points. Pairs whose sphere grid is infeasible are skipped;
/// if every pair fails the whole selection errors out.
#[allow(clippy::too_many_arguments)]
pub fn select_bandwidths(
    train: &Dataset,
    val: &Dataset,
    h_grid: &[f64],
    h_offsets: &[f64],
    max_bandwidth: f64,
    caps: &CriterionCaps,
    restarts: usize,
    selection_samples: usize,
    seed: u64,
) -> Result<BandwidthSelection> {
    let oracle = crate::datagen::Oracle::new(train.model);
    let mut scores: Vec<(Bandwidths, f64)> = Vec::new();
    let mut failures: Vec<(f64, String)> = Vec::new();
    let mut best_direction: Option<(f64, UnitDirection)> = None;

    for (hi, &h) in h_grid.iter().enumerate() {
        let capital_grid: Vec<f64> = h_offsets
            .iter()
            .map(|&o| h + o)
            .filter(|&cb| cb <= max_bandwidth + 1e-9)
            .collect();
        if capital_grid.is_empty() {
            continue;
        }
        let direction = SphereGrid::cartesian(train.x.cols(), h, 1.0, caps.mem_cap_bytes)
            .and_then(|grid| {
                fit_direction(train, h, &grid, caps, restarts, derive_seed_indexed(seed, "h", hi as u64))
            });
        let direction = match direction {
            Ok(d) => d,
            Err(e) => {
                failures.push((h, e.to_string()));
                continue;
            }
        };
        for &cb in &capital_grid {
            let model = match build_model(train, direction.clone(), cb) {
                Ok(m) => m,
                Err(e) => {
                    failures.push((h, format!("H={cb}: {e}")));
                    continue;
                }
            };
            let per_point: Vec<f64> = (0..val.n())
                .into_par_iter()
                .map(|i| {
                    let x = val.x.row(i);
                    let draw_seed = derive_seed_indexed(seed, "sel-draw", i as u64);
                    let ref_seed = derive_seed_indexed(seed, "sel-ref", i as u64);
                    let est = model.sample(x, selection_samples, draw_seed)?;
                    let reference = oracle.cond_sample(x, selection_samples, ref_seed);
                    crate::metrics::w1_empirical(&est, reference.data())
                })
                .collect::<Result<Vec<f64>>>()?;
            let score = per_point.iter().sum::<f64>() / per_point.len().max(1) as f64;
            scores.push((Bandwidths { h, cdf_bandwidth: cb }, score));
        }
        best_direction = match best_direction {
            Some((bh, d)) => {
                let this_best = scores
                    .iter()
                    .filter(|(b, _)| b.h == h)
                    .map(|&(_, s)| s)
                    .fold(f64::INFINITY, f64::min);
                let prev_best = scores
                    .iter()
                    .filter(|(b, _)| b.h == bh)
                    .map(|&(_, s)| s)
                    .fold(f64::INFINITY, f64::min);
                if this_best < prev_best {
                    Some((h, direction))
                } else {
                    Some((bh, d))
                }
            }
            None => Some((h, direction)),
        };
    }

    let Some((best, _)) = pick_best(&scores) else {
        let detail = failures
            .iter()
            .map(|(h, e)| format!("h={h}: {e}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Selection(detail));
    };
    let direction = best_direction
        .filter(|(h, _)| *h == best.h)
        .map(|(_, d)| d)
        .expect("winning h has a fitted direction");
    Ok(BandwidthSelection { best, direction, scores, failures })
}
