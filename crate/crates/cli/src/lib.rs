//! Command-line front end: configuration, CSV output and command dispatch.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;

pub use commands::{execute, run, Report};
pub use config::{parse_config, CliArgs, Command, ExperimentConfig};
pub use error::CliError;
