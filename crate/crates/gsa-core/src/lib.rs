//! Gated slot attention: kernels, a small model stack, the MQAR synthetic
//! task, a training loop, and verification suites, all self-contained.

pub mod error;
pub mod kernels;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::{Dtype, Scalar};
pub use tensor::Tensor;
