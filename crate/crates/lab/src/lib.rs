//! Experiment harness around `eqmanifold`: TOML configs, scenario runners and
//! CSV/JSON output. The `eqlab` binary is a thin wrapper over [`cli`].

pub mod cli;
pub mod config;
pub mod report;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, Scenario};
pub use report::{Check, Contingency, Format, ResultRow, RunOutput, Summary};
pub use runner::{run, RunError};
