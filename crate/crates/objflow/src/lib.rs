//! File formats, configuration, logging and pipeline orchestration on top
//! of `objflow-core`. The `objflow` binary is a thin clap front end over
//! this library.

pub mod bundle;
pub mod config;
pub mod error;
pub mod formats;
pub mod logging;
pub mod manifest;
pub mod pipeline;
pub mod synth;

pub use error::CliError;
