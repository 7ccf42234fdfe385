//! Partial-label learning with semantic perturbation (PLSP) on top of a small
//! reverse-mode autodiff engine.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the CLI and
//! metrics IO live in the `plsp` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod autodiff;
pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod pldata;
pub mod semstats;
pub mod sgd;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
