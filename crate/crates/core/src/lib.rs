//! Dual-branch scanpath prediction core.
//!
//! Everything in this crate is pure computation over in-memory buffers: a
//! small reverse-mode tensor engine, synthetic scene generation with oracle
//! scanpaths, the shared/task-specific model, two-stage training, scanpath
//! and conditional-saliency metrics, and parameter/FLOP accounting. File
//! formats, rendering and the command line live in the `scanshare` crate.
#![no_std]

extern crate alloc;

pub mod accounting;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod real;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
