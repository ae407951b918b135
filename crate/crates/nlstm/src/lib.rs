//! File formats, data loading, the training loop and the `nlstm` CLI on top
//! of [`nlstm_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod datasets;
mod error;
pub mod export;
pub mod params;
pub mod training;

pub use error::{AppError, ExitCode};
pub use nlstm_core as core;
