//! Batch front end for polylab: TOML run configurations in, CSV/JSON/SVG artifacts out.

pub mod config;
pub mod experiments;
pub mod report;
pub mod run;

pub use config::{Command, ConfigError, RunConfig};
pub use run::{run, RunError, RunOptions, RunResult};
