//! Training engine, layerwise weight normalization and generalization
//! analysis for small ReLU convolutional networks.
//!
//! The crate is `no_std` (with `alloc`). Enable the `std` feature for runtime
//! SIMD detection in the matrix kernels.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod analysis;
pub mod data;
pub mod error;
pub mod nn;
pub mod normalize;
pub mod real;
pub mod tensor;

pub use error::{Error, Result};
pub use real::{Precision, Real};
pub use tensor::Tensor;
