//! Recurrent two-stream guided refinement for salient object detection,
//! built on a small reverse-mode autodiff engine.

pub mod ablation;
pub mod backbone;
pub mod cli;
pub mod config;
pub mod error;
pub mod imageio;
pub mod metrics;
pub mod modelcheck;
pub mod nn;
pub mod params;
pub mod tensor;
pub mod tgrm;
pub mod train;

pub use error::{Error, Result};
