#![no_std]
extern crate alloc;

pub mod baselines;
pub mod datagen;
pub mod decompose;
pub mod diffusion;
pub mod embed;
pub mod error;
pub mod fusion;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod reconstruct;
pub mod rng;
pub mod stats;
pub mod stft;

pub use error::{Error, Result};
