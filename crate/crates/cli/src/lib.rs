//! Command-line companion of `protoalign-core`: file formats, run
//! configuration and the `proto-align` subcommands.

pub mod bundle;
pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod io;
pub mod manifest;

pub use cli::{run, Cli, Command, Outcome};
pub use error::{CliError, Result};
