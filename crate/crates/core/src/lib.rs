//! Multi-agent Bayesian optimization with Gaussian max-value entropy search.
//!
//! - [`gp`]: Matérn-3/2 Gaussian-process regression.
//! - [`acquisition`]: the GMES variance-reduction acquisition and batch selector.
//! - [`baselines`]: GP-UCB-PE, GP-BUCB and parallel Thompson sampling.
//! - [`testbed`]: benchmark functions, regret metrics and the experiment loop.
//! - [`sim`]: a desk-scale source-seeking robot simulator.

pub mod acquisition;
pub mod baselines;
pub mod error;
pub mod gp;
pub mod seed;
pub mod sim;
pub mod testbed;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
