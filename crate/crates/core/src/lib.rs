//! Spatial-spectral-frequency fusion network for multimodal remote-sensing
//! classification, with the transforms, attention operators, training loop
//! and metrics it is built from.
//!
//! Everything runs on `f64` and needs only `alloc`.

#![no_std]
extern crate alloc;

pub mod autodiff;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod hfset;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod params;
pub mod sparse;
pub mod ssaf;
pub mod tensor;
pub mod train;
pub mod transforms;

pub use error::{Error, Result};
pub use model::{ModelConfig, Module, ModuleSet, S2Fin};
pub use params::ModelParams;
pub use tensor::Tensor;
