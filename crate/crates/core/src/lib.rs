//! Construction and weak-form verification of candidate weak solutions of the
//! compressible Euler system driven by multiplicative Stratonovich noise.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod field;
pub mod generator;
pub mod paths;
pub mod rng;
pub mod testfn;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
