//! Data files, checkpoints, evaluation protocols and the `mrcdm` command
//! line, on top of the numerical core in `mrcdm-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod plot;
pub mod report;

pub use error::{Error, Result};
pub use mrcdm_core as core;
