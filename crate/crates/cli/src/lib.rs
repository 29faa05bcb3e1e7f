//! Experiment harness for the `gmes` command: config parsing, seeded sweeps,
//! aggregation and plots.

pub mod config;
pub mod plot;
pub mod sweep;
