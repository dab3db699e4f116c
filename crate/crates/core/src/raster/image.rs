use crate::error::{Error, Result};

/// Pixel value for background.
pub const WHITE: u8 = 1;
/// Pixel value for ink.
pub const INK: u8 = 0;

/// Row-major bilevel image; `1` is white background, `0` is ink.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl BinaryImage {
    /// All-white image.
    pub fn blank(height: usize, width: usize) -> Self {
        BinaryImage {
            height,
            width,
            pixels: vec![WHITE; height * width],
        }
    }

    pub fn from_pixels(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::shape(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(&bad) = pixels.iter().find(|&&p| p > 1) {
            return Err(Error::Malformed {
                what: "binary image",
                detail: format!("pixel value {bad}"),
            });
        }
        Ok(BinaryImage {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value <= 1);
        self.pixels[row * self.width + col] = value;
    }

    pub fn is_ink(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == INK
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == INK).count()
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|&p| p == WHITE)
    }

    /// True when every ink pixel of `self` is also ink in `other`.
    pub fn ink_subset_of(&self, other: &BinaryImage) -> bool {
        self.pixels.len() == other.pixels.len()
            && self
                .pixels
                .iter()
                .zip(&other.pixels)
                .all(|(&a, &b)| a == WHITE || b == INK)
    }

    /// Fraction of pixels on which the two images agree.
    pub fn agreement(&self, other: &BinaryImage) -> f64 {
        assert_eq!(self.pixels.len(), other.pixels.len());
        let same = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .filter(|(a, b)| a == b)
            .count();
        same as f64 / self.pixels.len().max(1) as f64
    }

    /// The image viewed as a probability map (white = 1.0).
    pub fn to_prob_map(&self) -> PixelProbMap {
        PixelProbMap {
            height: self.height,
            width: self.width,
            values: self.pixels.iter().map(|&p| p as f32).collect(),
        }
    }

    /// Pixel values as floats with ink mapped to 1.0 and white to 0.0.
    pub fn ink_plane(&self) -> impl Iterator<Item = f32> + '_ {
        self.pixels.iter().map(|&p| if p == INK { 1.0 } else { 0.0 })
    }
}

/// Per-pixel probability of white, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelProbMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl PixelProbMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape(format!(
                "{} values for a {height}x{width} map",
                values.len()
            )));
        }
        Ok(PixelProbMap {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        PixelProbMap {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Thresholds a probability map: values at or above `threshold` become white.
pub fn binarize(gray: &PixelProbMap, threshold: f32) -> BinaryImage {
    BinaryImage {
        height: gray.height,
        width: gray.width,
        pixels: gray
            .values
            .iter()
            .map(|&v| if v >= threshold { WHITE } else { INK })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binarize_extremes_and_tie() {
        let ink = binarize(&PixelProbMap::filled(2, 3, 0.0), 0.5);
        assert_eq!(ink.ink_count(), 6);
        let white = binarize(&PixelProbMap::filled(2, 3, 1.0), 0.5);
        assert!(white.is_blank());
        let tie = binarize(&PixelProbMap::filled(1, 1, 0.5), 0.5);
        assert_eq!(tie.get(0, 0), WHITE);
        let below = binarize(&PixelProbMap::filled(1, 1, 0.4999999), 0.5);
        assert_eq!(below.get(0, 0), INK);
    }

    #[test]
    fn rejects_bad_pixels() {
        assert!(BinaryImage::from_pixels(1, 2, vec![0, 2]).is_err());
        assert!(BinaryImage::from_pixels(1, 2, vec![0]).is_err());
    }

    #[test]
    fn subset_relation() {
        let mut a = BinaryImage::blank(1, 3);
        let mut b = BinaryImage::blank(1, 3);
        a.set(0, 1, INK);
        b.set(0, 1, INK);
        b.set(0, 2, INK);
        assert!(a.ink_subset_of(&b));
        assert!(!b.ink_subset_of(&a));
    }

    proptest! {
        #[test]
        fn binarize_is_idempotent(values in prop::collection::vec(0.0f32..=1.0, 12)) {
            let map = PixelProbMap::new(3, 4, values).unwrap();
            let once = binarize(&map, 0.5);
            let twice = binarize(&once.to_prob_map(), 0.5);
            prop_assert_eq!(once, twice);
        }
    }
}
