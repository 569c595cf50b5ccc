//! Command-line front end over the corpus, diagnostics, model and study crates.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use args::Cli;
pub use commands::run;
pub use error::{CliError, Result};
