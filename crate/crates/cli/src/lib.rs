//! Experiment runner for the `crossnorm` library: configs, per-seed CSV
//! logs, cross-seed aggregates and SVG plots.

pub mod config;
pub mod experiment;
pub mod output;
pub mod plot;

pub use config::{
    parse_config, parse_config_with, BufferSource, ConfigError, ExperimentConfig, ExperimentKind,
    MdpSource, NormTestConfig, Overrides, Payload,
};
pub use experiment::{run_experiment, Outcome, RunError};
