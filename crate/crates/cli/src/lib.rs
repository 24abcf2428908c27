//! Library side of the `mixcop` command-line tool, exposed so the
//! commands can be driven from tests.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod manifest;

pub use error::{CliError, CliResult};
