//! Experiment runner: JSON configs in, report.json, CSV tables and SVG plots out.

pub mod config;
pub mod probe;
pub mod report;
pub mod run;
pub mod svg;

pub use config::{ConfigError, ExperimentConfig, Kind};
pub use probe::{convergence_probe, ProbeParam, ProbeReport};
pub use report::{Check, Report};
pub use run::run;
