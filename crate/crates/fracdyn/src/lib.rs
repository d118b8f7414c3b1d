//! IO, configuration and the command-line front end over [`fracdyn_core`].

pub mod config;
pub mod csvio;
pub mod manifest;
pub mod run;
pub mod scan;

pub use config::{load_config, parse_config, ConfigError, RunConfig, Subcommand};
pub use run::{run, RunError, RunSummary};
