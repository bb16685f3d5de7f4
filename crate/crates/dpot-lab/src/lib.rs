//! Config-driven experiment runner for `dpot`.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{validate_config, ConfigError, ExperimentConfig, OutputFormat, Pipeline};
pub use pipeline::{run_experiment, RunError};
pub use report::{emit_report, EmitError, Report};
