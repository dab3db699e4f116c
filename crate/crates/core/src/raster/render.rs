use super::atlas::GlyphAtlas;
use super::frame::FrameSpec;
use super::image::BinaryImage;
use crate::error::{Error, Result};

/// Draws `text` left-aligned and vertically centred in a white frame,
/// one monospaced cell per character.
pub fn render_text(text: &str, frame: &FrameSpec, atlas: &GlyphAtlas) -> Result<BinaryImage> {
    if atlas.glyph_width() != frame.glyph_width || atlas.glyph_height() != frame.glyph_height {
        return Err(Error::shape(format!(
            "atlas cell {}x{} does not match frame cell {}x{}",
            atlas.glyph_width(),
            atlas.glyph_height(),
            frame.glyph_width,
            frame.glyph_height
        )));
    }
    let len = text.chars().count();
    let needed = frame.left_margin + len * frame.glyph_width;
    if needed > frame.width {
        return Err(Error::TextOverflow {
            text: text.to_owned(),
            needed,
            available: frame.width,
        });
    }

    let mut img = BinaryImage::blank(frame.height, frame.width);
    let top = frame.top_offset();
    let (gw, gh) = (frame.glyph_width, frame.glyph_height);
    for (i, ch) in text.chars().enumerate() {
        let glyph = atlas.glyph(ch);
        let left = frame.left_margin + i * gw;
        for y in 0..gh {
            for x in 0..gw {
                let v = glyph[y * gw + x];
                if v == 0 {
                    img.set(top + y, left + x, 0);
                }
            }
        }
    }
    Ok(img)
}

/// Whether `text` fits on one line of `frame`.
pub fn fits(text: &str, frame: &FrameSpec) -> bool {
    frame.left_margin + text.chars().count() * frame.glyph_width <= frame.width
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desk() -> (FrameSpec, GlyphAtlas) {
        (FrameSpec::desk(), GlyphAtlas::builtin())
    }

    #[test]
    fn empty_text_is_blank() {
        let (frame, atlas) = desk();
        let img = render_text("", &frame, &atlas).unwrap();
        assert!(img.is_blank());
        assert_eq!((img.height(), img.width()), (16, 256));
    }

    #[test]
    fn single_glyph_matches_atlas_cell() {
        let (frame, atlas) = desk();
        let img = render_text("A", &frame, &atlas).unwrap();
        let glyph = atlas.glyph('A');
        let (top, left) = (frame.top_offset(), frame.left_margin);
        for r in 0..frame.height {
            for c in 0..frame.width {
                let inside = (top..top + 8).contains(&r) && (left..left + 6).contains(&c);
                let expected = if inside { glyph[(r - top) * 6 + (c - left)] } else { 1 };
                assert_eq!(img.get(r, c), expected, "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn overflow_is_rejected() {
        let (frame, atlas) = desk();
        let too_long = "x".repeat(frame.width / frame.glyph_width + 1);
        assert!(matches!(
            render_text(&too_long, &frame, &atlas),
            Err(Error::TextOverflow { .. })
        ));
        let max = "x".repeat(frame.capacity());
        assert!(render_text(&max, &frame, &atlas).is_ok());
        assert!(!fits(&too_long, &frame));
    }

    #[test]
    fn mismatched_atlas_is_rejected() {
        let atlas = GlyphAtlas::builtin();
        assert!(render_text("a", &FrameSpec::paper(), &atlas).is_err());
    }

    proptest! {
        #[test]
        fn distinct_strings_render_distinct(a in "[a-zA-Z0-9äöüß ]{1,20}", idx in 0usize..20, c in "[a-zA-Z0-9äöüß ]") {
            let (frame, atlas) = desk();
            let mut chars: Vec<char> = a.chars().collect();
            let i = idx % chars.len();
            chars[i] = c.chars().next().unwrap();
            let b: String = chars.into_iter().collect();
            prop_assume!(a != b);
            let ia = render_text(&a, &frame, &atlas).unwrap();
            let ib = render_text(&b, &frame, &atlas).unwrap();
            prop_assert_ne!(ia, ib);
        }

        #[test]
        fn rendering_is_deterministic(s in "[ -~]{0,40}") {
            let (frame, atlas) = desk();
            prop_assert_eq!(render_text(&s, &frame, &atlas).unwrap(), render_text(&s, &frame, &atlas).unwrap());
        }
    }
}
