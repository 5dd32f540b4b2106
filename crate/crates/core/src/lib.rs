//! Random Schrödinger operators on island potentials and wavelet projection
//! potentials: geometry, commutator fields, finite-volume operators,
//! eigensolvers, free propagation and Meyer wavelet quadrature.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod disorder;
pub mod error;
pub mod evolution;
pub mod fft;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod operator;
pub mod potential;
pub mod spectral;
pub mod wavelet;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
