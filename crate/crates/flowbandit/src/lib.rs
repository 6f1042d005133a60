//! Experiment files, a parallel runner and CSV/JSON output around
//! `flowbandit-core`.

pub mod config;
mod error;
pub mod output;
pub mod runner;

pub use error::{ConfigError, Error, Result};
pub use flowbandit_core as core;
