//! Command-line layer: run configuration files and the `loglo` subcommands.

pub mod commands;
pub mod config;

pub use commands::{run_command, Cli, CliError, Command};
pub use config::{parse_config, parse_config_str, DataConfig, Pde, RunConfig};
