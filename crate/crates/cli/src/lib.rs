//! Scenario files, presets and the check pipeline behind the `porolab` binary.

pub mod config;
pub mod pipeline;
pub mod presets;

pub use config::{ConfigError, Scenario};
pub use pipeline::{run_scenario, Outcome, RunError};
