//! Column-wise standardization used by the network-based methods.

use crate::matrix::Matrix;

/// Per-column z-score transform fitted on training data.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(m: &Matrix) -> Self {
        let n = m.rows().max(1) as f64;
        let cols = m.cols();
        let mut mean = vec![0.0; cols];
        for r in 0..m.rows() {
            for (acc, &v) in mean.iter_mut().zip(m.row(r)) {
                *acc += v;
            }
        }
        for v in &mut mean {
            *v /= n;
        }
        let mut var = vec![0.0; cols];
        for r in 0..m.rows() {
            for (c, (&mu, &v)) in mean.iter().zip(m.row(r)).enumerate() {
                var[c] += (v - mu) * (v - mu);
            }
        }
        let std = var
            .iter()
            .map(|&v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    /// No-op transform of the given width.
    pub fn identity(cols: usize) -> Self {
        Standardizer {
            mean: vec![0.0; cols],
            std: vec![1.0; cols],
        }
    }

    pub fn transform(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        out
    }

    pub fn inverse(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for (c, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[c] + self.mean[c];
            }
        }
        out
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(c, &v)| (v - self.mean[c]) / self.std[c])
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(c, &v)| v * self.std[c] + self.mean[c])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    #[test]
    fn round_trip_is_identity() {
        let mut rng = rng_from_seed(1);
        let mut m = Matrix::zeros(40, 3);
        for v in m.data_mut() {
            *v = rng.random_range(-5.0..5.0);
        }
        let s = Standardizer::fit(&m);
        let back = s.inverse(&s.transform(&m));
        for (a, b) in m.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transformed_columns_have_zero_mean_unit_variance() {
        let mut rng = rng_from_seed(2);
        let mut m = Matrix::zeros(500, 2);
        for v in m.data_mut() {
            *v = rng.random_range(0.0..10.0);
        }
        let s = Standardizer::fit(&m);
        let t = s.transform(&m);
        for c in 0..2 {
            let col = t.col(c);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_column_does_not_divide_by_zero() {
        let m = Matrix::from_vec(3, 1, vec![2.0, 2.0, 2.0]).unwrap();
        let s = Standardizer::fit(&m);
        let t = s.transform(&m);
        assert!(t.data().iter().all(|v| v.is_finite()));
    }
}
