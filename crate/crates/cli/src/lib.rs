//! Command-line orchestration for finite operator learning runs: sample
//! generation, reference solves, training, evaluation and export.

pub mod commands;
pub mod config;

pub use config::RunConfig;
