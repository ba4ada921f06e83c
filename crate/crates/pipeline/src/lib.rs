//! Configuration, file formats, synthetic data and the stage drivers behind
//! the `f2f` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod reenact;
pub mod synth;

pub use error::{Error, Result};
