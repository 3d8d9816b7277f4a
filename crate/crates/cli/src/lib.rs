//! Orchestration library behind the `gpse` binary: run configuration, stage
//! training, the end-to-end enhancement pipeline, and size accounting.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod size;
pub mod stages;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::{EnhanceProbe, NoProbe, Pipeline, PipelineCheckpointSet, SUPPORTED_RATES};
pub use size::{count_params_and_macs, SizeReport};
pub use stages::{run_stage, Stage};
