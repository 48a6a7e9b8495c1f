//! Experiment harness around the `mtsurv` library: dataset preparation,
//! model fitting and evaluation, curve emission, VIMP and random search.
//!
//! Every command is deterministic given its seeds; wall-clock timings go to
//! a separate file so reports can be compared byte for byte.

pub mod cli;
pub mod commands;
pub mod config;
pub mod curves;
pub mod error;
pub mod model;
pub mod report;
pub mod svg;

pub use error::CliError;
