//! End-to-end experiment: synthetic data, clustering, disaggregation
//! training, identification, state estimation and evaluation, with every
//! stage's output persisted under one directory.

pub mod artifacts;
mod config;
mod stages;

pub use config::{ExperimentConfig, FeederDataConfig, MtslStageConfig, DEFAULT_FEEDER};
pub use stages::{Pipeline, STAGES};
