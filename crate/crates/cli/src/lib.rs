//! Command layer of the `rlhf-bilevel` binary: experiment configs, runs,
//! seed sweeps and the certification suite.

pub mod commands;
pub mod config;

pub use config::{EnvConfig, ExperimentConfig};
