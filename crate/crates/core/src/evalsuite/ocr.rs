use crate::raster::{BinaryImage, FrameSpec, GlyphAtlas};

/// Template matcher over the fixed glyph cells of a frame.
#[derive(Debug, Clone)]
pub struct Ocr {
    frame: FrameSpec,
    /// (character, packed ink mask), sorted by code point.
    glyphs: Vec<(char, Vec<u64>)>,
}

fn pack(bits: impl Iterator<Item = bool>) -> Vec<u64> {
    let mut words = Vec::new();
    for (i, ink) in bits.enumerate() {
        if i % 64 == 0 {
            words.push(0);
        }
        if ink {
            *words.last_mut().unwrap() |= 1 << (i % 64);
        }
    }
    words
}

impl Ocr {
    /// Panics if the atlas cell differs from the frame cell.
    pub fn new(frame: &FrameSpec, atlas: &GlyphAtlas) -> Self {
        assert_eq!(
            (atlas.glyph_width(), atlas.glyph_height()),
            (frame.glyph_width, frame.glyph_height),
            "atlas and frame cells differ"
        );
        let glyphs = atlas.iter().map(|(ch, px)| (ch, pack(px.iter().map(|&v| v == 0)))).collect();
        Ocr { frame: *frame, glyphs }
    }

    fn cell(&self, img: &BinaryImage, index: usize) -> Vec<u64> {
        let f = &self.frame;
        let left = f.left_margin + index * f.glyph_width;
        let top = f.top_offset();
        pack((0..f.glyph_height).flat_map(|y| (0..f.glyph_width).map(move |x| (y, x))).map(|(y, x)| img.is_ink(top + y, left + x)))
    }

    fn best(&self, cell: &[u64]) -> char {
        let mut best = (u32::MAX, '\0');
        for (ch, mask) in &self.glyphs {
            let d: u32 = mask.iter().zip(cell).map(|(a, b)| (a ^ b).count_ones()).sum();
            // glyphs are in code point order, so the first minimum wins ties
            if d < best.0 {
                best = (d, *ch);
            }
        }
        best.1
    }

    /// Reads every cell left to right; trailing blank cells and trailing spaces are dropped.
    pub fn read(&self, img: &BinaryImage) -> String {
        let f = &self.frame;
        assert_eq!((img.width(), img.height()), (f.width, f.height), "image does not match the frame");
        let cells: Vec<Vec<u64>> = (0..f.capacity()).map(|i| self.cell(img, i)).collect();
        let used = cells.iter().rposition(|c| c.iter().any(|&w| w != 0)).map_or(0, |i| i + 1);
        let text: String = cells[..used].iter().map(|c| self.best(c)).collect();
        text.trim_end_matches(' ').to_string()
    }
}

/// Transcribes a frame-sized image by exact template matching.
pub fn ocr(img: &BinaryImage, frame: &FrameSpec, atlas: &GlyphAtlas) -> String {
    Ocr::new(frame, atlas).read(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::render_text;

    #[test]
    fn blank_reads_empty() {
        let f = FrameSpec::desk();
        assert_eq!(ocr(&BinaryImage::blank(f.height, f.width), &f, &GlyphAtlas::builtin()), "");
    }

    #[test]
    fn interior_spaces_survive() {
        let f = FrameSpec::desk();
        let atlas = GlyphAtlas::builtin();
        for s in ["a  b", " lead", "ß„x“", "\u{FFFD}?"] {
            assert_eq!(ocr(&render_text(s, &f, &atlas).unwrap(), &f, &atlas), s);
        }
    }

    #[test]
    fn unknown_characters_read_as_replacement() {
        let f = FrameSpec::desk();
        let atlas = GlyphAtlas::builtin();
        assert_eq!(ocr(&render_text("a€", &f, &atlas).unwrap(), &f, &atlas), "a\u{FFFD}");
    }

    #[test]
    fn paper_frame() {
        let f = FrameSpec::paper();
        let atlas = GlyphAtlas::builtin_for(f.glyph_width, f.glyph_height).unwrap();
        let s = "Hallo Welt";
        assert_eq!(ocr(&render_text(s, &f, &atlas).unwrap(), &f, &atlas), s);
    }
}
