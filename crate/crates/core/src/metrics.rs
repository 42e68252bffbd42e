//! Discrepancy measures between empirical samples: squared-error losses for
//! conditional mean/SD estimates, the exact 1D 1-Wasserstein distance, and
//! its sliced extension for multivariate responses.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed_indexed, rng_from_seed};

fn mse(est: &Matrix, truth: &Matrix) -> Result<f64> {
    if est.rows() != truth.rows() || est.cols() != truth.cols() {
        return Err(Error::Dimension(format!(
            "mse: {}x{} vs {}x{}",
            est.rows(),
            est.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    if est.rows() == 0 {
        return Err(Error::Argument("mse needs at least one row".into()));
    }
    let acc: f64 = est
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&e, &t)| (e - t) * (e - t))
        .sum();
    Ok(acc / est.rows() as f64)
}

/// Mean squared error of conditional-mean estimates over a test set; for a
/// multivariate response the squared Euclidean norm is summed across
/// coordinates before averaging.
pub fn mse_mean(est: &Matrix, truth: &Matrix) -> Result<f64> {
    mse(est, truth)
}

/// Mean squared error of conditional-SD estimates; same form as [`mse_mean`].
pub fn mse_sd(est: &Matrix, truth: &Matrix) -> Result<f64> {
    mse(est, truth)
}

/// Exact 1-Wasserstein distance between two univariate empirical measures,
/// computed by integrating the absolute CDF difference over the merged
/// support. Handles unequal sample sizes exactly.
pub fn w1_empirical(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("w1_empirical needs nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Argument("w1_empirical needs finite values".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let (n, m) = (sa.len() as f64, sb.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut prev = f64::NAN;
    let mut total = 0.0;
    while ia < sa.len() || ib < sb.len() {
        let cur = match (sa.get(ia), sb.get(ib)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if !prev.is_nan() && cur > prev {
            let fa = ia as f64 / n;
            let fb = ib as f64 / m;
            total += (fa - fb).abs() * (cur - prev);
        }
        while ia < sa.len() && sa[ia] == cur {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] == cur {
            ib += 1;
        }
        prev = cur;
    }
    Ok(total)
}

/// Sliced 1-Wasserstein distance: the average of [`w1_empirical`] over
/// `n_proj` uniform random unit directions. Deterministic given `seed`; each
/// projection uses its own derived sub-seed so the estimate is independent
/// of evaluation order.
pub fn sliced_w1(a: &Matrix, b: &Matrix, n_proj: usize, seed: u64) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "sliced_w1: {} vs {} columns",
            a.cols(),
            b.cols()
        )));
    }
    if a.cols() == 0 || n_proj == 0 {
        return Err(Error::Argument("sliced_w1 needs q >= 1 and n_proj >= 1".into()));
    }
    let q = a.cols();
    let distances: Result<Vec<f64>> = (0..n_proj)
        .into_par_iter()
        .map(|k| {
            let dir = random_unit_direction(q, derive_seed_indexed(seed, "slice", k as u64));
            let pa = project(a, &dir);
            let pb = project(b, &dir);
            w1_empirical(&pa, &pb)
        })
        .collect();
    let distances = distances?;
    Ok(distances.iter().sum::<f64>() / n_proj as f64)
}

/// Normalized Gaussian vector: uniform on the unit sphere.
fn random_unit_direction(q: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    loop {
        let v: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn project(m: &Matrix, dir: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(dir).map(|(&x, &d)| x * d).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn mse_basics() {
        let est = Matrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap();
        let truth = Matrix::from_vec(2, 1, vec![1.0, -1.0]).unwrap();
        assert_eq!(mse_mean(&est, &truth).unwrap(), 1.0);
        assert_eq!(mse_sd(&truth, &truth).unwrap(), 0.0);
        assert!(mse_mean(&est, &Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn mse_matches_scalar_loop_oracle() {
        let mut rng = rng_from_seed(8);
        let k = 50;
        let q = 3;
        let mut est = Matrix::zeros(k, q);
        let mut truth = Matrix::zeros(k, q);
        for v in est.data_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
        for v in truth.data_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
        let mut oracle = 0.0;
        for i in 0..k {
            for j in 0..q {
                let d = est.get(i, j) - truth.get(i, j);
                oracle += d * d;
            }
        }
        oracle /= k as f64;
        assert!((mse_mean(&est, &truth).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn w1_point_masses_and_identity() {
        assert_eq!(w1_empirical(&[0.0], &[1.0]).unwrap(), 1.0);
        let a = normals(200, 1);
        assert_eq!(w1_empirical(&a, &a).unwrap(), 0.0);
        assert!(w1_empirical(&[], &[1.0]).is_err());
    }

    #[test]
    fn w1_shift_matches_sorted_sample_oracle() {
        let a = normals(500, 2);
        let b: Vec<f64> = a.iter().map(|&v| v + 1.0).collect();
        // Equal sizes: W1 is the mean absolute difference of sorted samples.
        let mut sa = a.clone();
        let mut sb = b.clone();
        sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let oracle: f64 =
            sa.iter().zip(&sb).map(|(&x, &y)| (x - y).abs()).sum::<f64>() / sa.len() as f64;
        let got = w1_empirical(&a, &b).unwrap();
        assert!((got - 1.0).abs() < 1e-12);
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn w1_unequal_sizes_against_quantile_oracle() {
        // n = 2 vs m = 3: integrate |F_a^{-1} - F_b^{-1}| over u in (0,1)
        // by splitting at the breakpoints {1/3, 1/2, 2/3}.
        let a = [0.0, 1.0];
        let b = [0.0, 0.5, 2.0];
        // Quantiles: F_a^{-1} = 0 on (0,1/2], 1 on (1/2,1);
        //            F_b^{-1} = 0 on (0,1/3], 0.5 on (1/3,2/3], 2 on (2/3,1).
        let oracle = (1.0 / 3.0) * 0.0 + (1.0 / 6.0) * 0.5 + (1.0 / 6.0) * 0.5 + (1.0 / 3.0) * 1.0;
        assert!((w1_empirical(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn w1_is_symmetric_and_translation_invariant() {
        let a = normals(150, 3);
        let b: Vec<f64> = normals(80, 4).iter().map(|&v| 0.3 * v + 0.2).collect();
        let d1 = w1_empirical(&a, &b).unwrap();
        let d2 = w1_empirical(&b, &a).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
        let shift = 5.25;
        let ash: Vec<f64> = a.iter().map(|&v| v + shift).collect();
        let bsh: Vec<f64> = b.iter().map(|&v| v + shift).collect();
        assert!((w1_empirical(&ash, &bsh).unwrap() - d1).abs() < 1e-9);
    }

    #[test]
    fn w1_triangle_inequality_on_random_triples() {
        for seed in 0..10 {
            let a = normals(60, 100 + seed);
            let b: Vec<f64> = normals(40, 200 + seed).iter().map(|&v| v * 2.0).collect();
            let c: Vec<f64> = normals(50, 300 + seed).iter().map(|&v| v - 1.0).collect();
            let ab = w1_empirical(&a, &b).unwrap();
            let bc = w1_empirical(&b, &c).unwrap();
            let ac = w1_empirical(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn sliced_reduces_to_w1_in_one_dimension() {
        let a = Matrix::from_vec(5, 1, normals(5, 5)).unwrap();
        let b = Matrix::from_vec(7, 1, normals(7, 6)).unwrap();
        let w = w1_empirical(a.data(), b.data()).unwrap();
        for n_proj in [1, 3, 17] {
            let s = sliced_w1(&a, &b, n_proj, 9).unwrap();
            assert!((s - w).abs() < 1e-12, "n_proj={n_proj}: {s} vs {w}");
        }
    }

    #[test]
    fn sliced_point_masses_match_circle_average() {
        // E |u_1| over the unit circle is 2/pi.
        let a = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let b = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let got = sliced_w1(&a, &b, 10_000, 7).unwrap();
        let expected = 2.0 / std::f64::consts::PI;
        assert!((got - expected).abs() < 0.02, "{got} vs {expected}");
    }

    #[test]
    fn sliced_identical_samples_give_zero() {
        let a = Matrix::from_vec(4, 3, normals(12, 8)).unwrap();
        assert_eq!(sliced_w1(&a, &a, 25, 1).unwrap(), 0.0);
    }

    #[test]
    fn sliced_is_rotation_invariant_statistically() {
        // Rotate both samples by the same planar rotation; the estimate must
        // agree within Monte Carlo error.
        let n = 300;
        let mut rng = rng_from_seed(10);
        let mut a = Matrix::zeros(n, 2);
        let mut b = Matrix::zeros(n, 2);
        for v in a.data_mut() {
            *v = rng.sample(StandardNormal);
        }
        for v in b.data_mut() {
            *v = rng.sample::<f64, _>(StandardNormal) * 1.5 + 0.5;
        }
        let theta: f64 = 0.83;
        let rotate = |m: &Matrix| {
            let mut out = Matrix::zeros(n, 2);
            for r in 0..n {
                let (x, y) = (m.get(r, 0), m.get(r, 1));
                out.set(r, 0, theta.cos() * x - theta.sin() * y);
                out.set(r, 1, theta.sin() * x + theta.cos() * y);
            }
            out
        };
        let d = sliced_w1(&a, &b, 400, 11).unwrap();
        let dr = sliced_w1(&rotate(&a), &rotate(&b), 400, 12).unwrap();
        assert!((d - dr).abs() < 0.05, "{d} vs {dr}");
    }
}
