//! Core of a desk-scale trajectory-extrapolation lab: learn an implicit
//! physical state from rendered frames of a ball rolling in a bowl, roll it
//! forward with a learned transition, and decode positions (optionally with a
//! Gaussian belief and angular velocity).
//!
//! The crate is `no_std` and needs only `alloc`. Everything here is a pure
//! function of its inputs and seeds; file formats, the CLI, and the training
//! orchestration live in the `bowlnet` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod error;
pub mod math;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod render;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
