//! Binary portable graymap (P5) input and output.

use std::io::Write;
use std::path::Path;

use super::image::{BinaryImage, PixelProbMap};
use crate::error::{Error, Result};

/// Anything that can be written as an 8-bit graymap.
pub trait Grayscale {
    fn dims(&self) -> (usize, usize);
    /// Row-major bytes, 0 = ink, 255 = white.
    fn gray_bytes(&self) -> Vec<u8>;
}

impl Grayscale for BinaryImage {
    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    fn gray_bytes(&self) -> Vec<u8> {
        self.pixels().iter().map(|&p| if p == 0 { 0 } else { 255 }).collect()
    }
}

impl Grayscale for PixelProbMap {
    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    fn gray_bytes(&self) -> Vec<u8> {
        self.values().iter().map(|&p| prob_to_byte(p)).collect()
    }
}

/// Linear scale to 0..=255, rounding half up.
pub fn prob_to_byte(p: f32) -> u8 {
    let v = (p.clamp(0.0, 1.0) as f64 * 255.0 + 0.5).floor();
    v as u8
}

pub fn encode_pgm(img: &impl Grayscale) -> Vec<u8> {
    let (h, w) = img.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.gray_bytes());
    out
}

pub fn export_image(img: &impl Grayscale, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// 8-bit grayscale raster as read from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    /// Thresholds at half intensity: bytes >= 128 become white.
    pub fn to_binary(&self) -> BinaryImage {
        let pixels = self.data.iter().map(|&b| u8::from(b >= 128)).collect();
        BinaryImage::from_pixels(self.height, self.width, pixels).expect("dimensions checked on decode")
    }

    pub fn to_prob_map(&self) -> PixelProbMap {
        let values = self.data.iter().map(|&b| b as f32 / 255.0).collect();
        PixelProbMap::new(self.height, self.width, values).expect("dimensions checked on decode")
    }
}

fn malformed(detail: impl Into<String>) -> Error {
    Error::Malformed {
        what: "P5 graymap",
        detail: detail.into(),
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(malformed("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("truncated header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("header number out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(malformed(format!("unsupported maxval {maxval}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed("missing separator after header")),
    }
    let need = width * height;
    let data = bytes.get(pos..pos + need).ok_or_else(|| malformed("truncated pixel data"))?;
    Ok(GrayImage {
        width,
        height,
        data: data.to_vec(),
    })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(bytes: &[u8]) -> &[u8] {
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        &bytes[header.len()..]
    }

    #[test]
    fn white_and_ink_payloads() {
        let white = BinaryImage::blank(2, 2);
        assert_eq!(payload(&encode_pgm(&white)), &[255, 255, 255, 255]);
        let ink = BinaryImage::from_pixels(2, 2, vec![0; 4]).unwrap();
        assert_eq!(payload(&encode_pgm(&ink)), &[0, 0, 0, 0]);
    }

    #[test]
    fn half_probability_rounds_up() {
        assert_eq!(prob_to_byte(0.5), 128);
        assert_eq!(prob_to_byte(0.0), 0);
        assert_eq!(prob_to_byte(1.0), 255);
        let map = PixelProbMap::filled(2, 2, 0.5);
        assert_eq!(payload(&encode_pgm(&map)), &[128; 4]);
    }

    #[test]
    fn decode_reads_what_encode_writes() {
        let img = BinaryImage::from_pixels(2, 3, vec![0, 1, 1, 0, 0, 1]).unwrap();
        let gray = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!((gray.width, gray.height), (3, 2));
        assert_eq!(gray.to_binary(), img);
    }

    #[test]
    fn decode_skips_comments() {
        let bytes = b"P5\n# made by hand\n1 1\n255\n\x80";
        let gray = decode_pgm(bytes).unwrap();
        assert_eq!(gray.data, vec![128]);
        assert_eq!(gray.to_binary().get(0, 0), 1);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn export_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        export_image(&BinaryImage::blank(2, 2), &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), encode_pgm(&BinaryImage::blank(2, 2)));
        assert!(matches!(
            export_image(&BinaryImage::blank(2, 2), dir.path().join("missing/x.pgm")),
            Err(Error::Io { .. })
        ));
    }
}
