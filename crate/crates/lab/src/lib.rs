//! Std companion of `bowlnet-core`: configuration presets, the on-disk
//! dataset and checkpoint formats, training and evaluation orchestration, and
//! report tables. The `bowlnet` binary exposes these as subcommands.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod report;
pub mod train;

pub use error::{LabError, LabResult};
