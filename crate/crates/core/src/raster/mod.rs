//! Fixed-frame text rasterisation and graymap I/O.

mod atlas;
mod frame;
mod image;
mod pgm;
mod render;

pub use atlas::{GlyphAtlas, REPLACEMENT};
pub use frame::{FrameSpec, BASE_GLYPH_HEIGHT, BASE_GLYPH_WIDTH};
pub use image::{binarize, BinaryImage, PixelProbMap, INK, WHITE};
pub use pgm::{decode_pgm, encode_pgm, export_image, prob_to_byte, read_pgm, GrayImage, Grayscale};
pub use render::{fits, render_text};

/// Binarization threshold used for targets and at decode time.
pub const THRESHOLD: f32 = 0.5;
