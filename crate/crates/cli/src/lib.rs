//! Configuration, replica orchestration and file output for the `polarity` binary.

pub mod commands;
pub mod config;
pub mod ensemble;
pub mod output;

pub use commands::{execute, CliError, Command, Outcome};
pub use config::{parse_config, RunConfig};
