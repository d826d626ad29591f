//! Filesystem, configuration and command-line layer over `sfmim-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
mod error;
pub mod image_io;
pub mod manifest;
pub mod runlog;
pub mod source;
pub mod stats;
pub mod synth_io;

pub use error::{Error, Result};
