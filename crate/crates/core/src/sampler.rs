//! Uniform sampling interface over the fitted estimators.

use crate::datagen::Oracle;
use crate::error::Result;
use crate::matrix::Matrix;

/// A fitted conditional sampler: draws `n` responses at a query point.
pub trait ConditionalSampler: Send + Sync {
    fn sample_at(&self, x: &[f64], n: usize, seed: u64) -> Result<Matrix>;
}

impl ConditionalSampler for crate::ddpm::DdpmModel {
    fn sample_at(&self, x: &[f64], n: usize, seed: u64) -> Result<Matrix> {
        self.sample(x, n, seed)
    }
}

impl ConditionalSampler for crate::gcds::GcdsModel {
    fn sample_at(&self, x: &[f64], n: usize, seed: u64) -> Result<Matrix> {
        self.sample(x, n, seed)
    }
}

impl ConditionalSampler for crate::series_cde::SeriesCdeModel {
    fn sample_at(&self, x: &[f64], n: usize, seed: u64) -> Result<Matrix> {
        Ok(self.sample(x, n, seed))
    }
}

impl ConditionalSampler for crate::single_index::SingleIndexModel {
    fn sample_at(&self, x: &[f64], n: usize, seed: u64) -> Result<Matrix> {
        let draws = self.sample(x, n, seed)?;
        Matrix::from_vec(n, 1, draws)
    }
}

/// Perfect sampler backed by the ground-truth conditional law; bounds the
/// Monte Carlo noise floor of the evaluation protocol itself.
pub struct OracleSampler(pub Oracle);

impl ConditionalSampler for OracleSampler {
    fn sample_at(&self, x: &[f64], n: usize, seed: u64) -> Result<Matrix> {
        Ok(self.0.cond_sample(x, n, seed))
    }
}
