//! Behavioral simulation of delay-based strong PUFs with non-monotonic
//! quantization (NMQ-RO) and classical arbiter PUFs: quality metrics,
//! uniqueness-sensitivity surfaces and model-building attacks.

pub mod attacks;
pub mod dataset;
pub mod entropy;
pub mod error;
pub mod metrics;
pub mod plotdata;
pub mod puf;
pub mod rng;
pub mod sensitivity;

pub use error::{Error, Result};
