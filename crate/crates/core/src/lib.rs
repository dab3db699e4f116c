//! Pixel-level in-image machine translation.
//!
//! Sentences are rendered into fixed frames, a neural model learns to turn
//! the source-language image into the target-language image using only
//! per-pixel supervision, and outputs are scored by transcribing them back
//! to text.

pub mod autodiff;
pub mod cli;
pub mod corpus;
pub mod evalsuite;
pub mod inference;
pub mod model;
pub mod raster;
pub mod trainer;

mod error;

pub use error::{Error, Result};
