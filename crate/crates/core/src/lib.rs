//! Nested LSTM building blocks without the standard library.
//!
//! Everything numeric lives here: dense 64-bit linear algebra, activations,
//! a seeded generator with Glorot and orthogonal initializers, the LSTM and
//! Nested LSTM step functions with exact reverse-mode gradients, whole-model
//! BPTT, Adam/RMSProp, corpus batching, MNIST glimpse construction and the
//! evaluation metrics. File formats, the epoch loop and the CLI live in the
//! `nlstm` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod cells;
pub mod data;
mod error;
pub mod model;
pub mod numerics;
pub mod optim;

pub use error::{Error, Result};
