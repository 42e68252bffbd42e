//! Conditional distribution estimation library and benchmark harness.
//!
//! Implements four estimator families behind one sampling interface:
//! a single-index kernel CDF estimator, orthogonal-series conditional
//! density estimators (per-coefficient regression and a joint network),
//! an adversarial conditional sampler, and a conditional denoising
//! diffusion model. Ships with ten synthetic data models, ground-truth
//! oracles, evaluation metrics, and a benchmark harness that compares the
//! methods under a shared seeded protocol.

pub mod datagen;
pub mod ddpm;
pub mod error;
pub mod gcds;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod scaling;
pub mod series_cde;
pub mod single_index;

pub use error::{Error, Result};
pub use matrix::Matrix;
