//! Configuration parsing and subcommand execution for the `notrade` binary.

pub mod commands;
pub mod config;

pub use commands::{document, execute, Command, Failure, Outcome};
pub use config::{resolve_seed, RunConfig};
