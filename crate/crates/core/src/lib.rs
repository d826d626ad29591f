//! Spatial-frequency dual masked image modeling for grayscale ultrasound-like
//! images.
//!
//! This crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! pipeline: image fields, 2D Fourier analysis and band-stop masks, spatial
//! mean masking, the L1 + focal frequency objective, a small vision transformer
//! encoder/decoder with hand-written reverse-mode gradients, Adam with a cosine
//! schedule, the pre-training and fine-tuning loops, and evaluation metrics.
//!
//! File formats, PNG decoding and the command-line driver live in the `sfmim`
//! crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
mod fft;
mod math;

pub mod field;
pub mod gradcheck;
pub mod losses;
pub mod masking;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod probe;
pub mod rng;
pub mod sampling;
pub mod spectral;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use field::{FloatField, GrayImage};
pub use spectral::Spectrum;
