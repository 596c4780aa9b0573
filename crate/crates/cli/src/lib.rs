//! Configuration, caching and reporting around the `histcircle` pipeline.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{load_config, run, Command, RunOptions};
pub use config::ExperimentConfig;
pub use error::CliError;
pub use manifest::RunManifest;
