//! Command-line pipelines around the `sfair` library: train, audit, sweep,
//! expansion reports and synthetic graph export.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use config::{Layers, RunConfig};
pub use error::{CliError, CliResult};
