//! Classification-based copula density estimation.
//!
//! Fits a copula by training a probabilistic classifier to separate
//! dependent observations from independent Gaussian noise on the latent
//! scale, then evaluates the fitted log-density, runs diagnostics and
//! samples with Hamiltonian Monte Carlo.

pub mod baselines;
pub mod classifier;
pub mod error;
pub mod estimator;
pub mod io;
pub mod metrics;
pub mod normal;
pub mod sampling;
pub mod marginals;
pub mod gaussian;

pub use error::{Error, Result};
