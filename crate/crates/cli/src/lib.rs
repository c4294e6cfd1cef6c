//! Command-line pipeline for the `bodyfit` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod scenario;

pub use error::{CliError, CliResult};
