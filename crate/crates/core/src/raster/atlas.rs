use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use super::frame::{BASE_GLYPH_HEIGHT, BASE_GLYPH_WIDTH};
use crate::error::{Error, Result};

const DEFAULT_ATLAS: &str = include_str!("../../assets/default_atlas.txt");

/// Code point under which the replacement glyph is stored.
pub const REPLACEMENT: char = '\u{FFFD}';

/// Monospaced bitmap font: every glyph is `glyph_width x glyph_height`
/// pixels, stored row-major with `1` = white and `0` = ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphAtlas {
    glyph_width: usize,
    glyph_height: usize,
    glyphs: BTreeMap<char, Vec<u8>>,
    replacement: Vec<u8>,
}

impl GlyphAtlas {
    /// The built-in 6x8 font: printable ASCII, German letters, typographic
    /// quotes and dashes.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_ATLAS).expect("built-in atlas is well formed")
    }

    /// Built-in font scaled to the given cell size. The size must be an
    /// integer multiple of 6x8.
    pub fn builtin_for(glyph_width: usize, glyph_height: usize) -> Result<Self> {
        let sx = glyph_width / BASE_GLYPH_WIDTH;
        let sy = glyph_height / BASE_GLYPH_HEIGHT;
        if sx == 0 || sx != sy || sx * BASE_GLYPH_WIDTH != glyph_width || sy * BASE_GLYPH_HEIGHT != glyph_height {
            return Err(Error::Config(format!(
                "glyph cell {glyph_width}x{glyph_height} is not an integer scale of {BASE_GLYPH_WIDTH}x{BASE_GLYPH_HEIGHT}"
            )));
        }
        Ok(Self::builtin().scaled(sx))
    }

    pub fn glyph_width(&self) -> usize {
        self.glyph_width
    }

    pub fn glyph_height(&self) -> usize {
        self.glyph_height
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn contains(&self, ch: char) -> bool {
        self.glyphs.contains_key(&ch)
    }

    /// Characters in ascending code point order.
    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.glyphs.keys().copied()
    }

    /// Glyphs in ascending code point order.
    pub fn iter(&self) -> impl Iterator<Item = (char, &[u8])> {
        self.glyphs.iter().map(|(&c, g)| (c, g.as_slice()))
    }

    /// Total lookup: unknown characters get the replacement box.
    pub fn glyph(&self, ch: char) -> &[u8] {
        match self.glyphs.get(&ch) {
            Some(g) => g,
            None => {
                warn!("no glyph for {ch:?} (U+{:04X}); drawing replacement box", ch as u32);
                &self.replacement
            }
        }
    }

    pub fn replacement(&self) -> &[u8] {
        &self.replacement
    }

    /// Nearest-neighbour enlargement of every glyph.
    pub fn scaled(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let (w, h) = (self.glyph_width, self.glyph_height);
        let scale = |g: &Vec<u8>| {
            let mut out = vec![1u8; w * h * factor * factor];
            for y in 0..h * factor {
                for x in 0..w * factor {
                    out[y * w * factor + x] = g[(y / factor) * w + x / factor];
                }
            }
            out
        };
        GlyphAtlas {
            glyph_width: w * factor,
            glyph_height: h * factor,
            glyphs: self.glyphs.iter().map(|(&c, g)| (c, scale(g))).collect(),
            replacement: scale(&self.replacement),
        }
    }

    /// Parses the plain-text atlas format: a hex code point line followed by
    /// `glyph_height` rows of `0`/`1`. Blank lines are ignored. An entry for
    /// U+FFFD, when present, becomes the replacement glyph.
    pub fn parse(text: &str) -> Result<Self> {
        let malformed = |line: usize, detail: String| Error::Malformed {
            what: "atlas",
            detail: format!("line {line}: {detail}"),
        };
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();

        let mut glyphs = BTreeMap::new();
        let mut width = None;
        let mut height = None;
        let mut i = 0;
        while i < lines.len() {
            let (ln, head) = lines[i];
            let cp = u32::from_str_radix(head, 16)
                .ok()
                .and_then(char::from_u32)
                .ok_or_else(|| malformed(ln, format!("bad code point {head:?}")))?;
            i += 1;
            let mut rows = Vec::new();
            while i < lines.len() && lines[i].1.bytes().all(|b| b == b'0' || b == b'1') {
                // A code point such as "0010" is also all digits; glyph rows
                // are told apart by the known height once it is fixed.
                if let Some(h) = height {
                    if rows.len() == h {
                        break;
                    }
                }
                if let Some(w) = width {
                    if lines[i].1.len() != w {
                        break;
                    }
                }
                rows.push(lines[i]);
                i += 1;
            }
            if rows.is_empty() {
                return Err(malformed(ln, format!("glyph U+{:04X} has no rows", cp as u32)));
            }
            let w = *width.get_or_insert(rows[0].1.len());
            let h = *height.get_or_insert(rows.len());
            if rows.len() != h {
                return Err(malformed(ln, format!("glyph U+{:04X} has {} rows, expected {h}", cp as u32, rows.len())));
            }
            let mut bits = Vec::with_capacity(w * h);
            for &(rl, row) in &rows {
                if row.len() != w {
                    return Err(malformed(rl, format!("row width {} expected {w}", row.len())));
                }
                bits.extend(row.bytes().map(|b| b - b'0'));
            }
            if glyphs.insert(cp, bits).is_some() {
                return Err(malformed(ln, format!("duplicate glyph U+{:04X}", cp as u32)));
            }
        }

        let (w, h) = match (width, height) {
            (Some(w), Some(h)) if w > 0 => (w, h),
            _ => {
                return Err(Error::Malformed {
                    what: "atlas",
                    detail: "no glyphs".into(),
                })
            }
        };
        let replacement = glyphs.get(&REPLACEMENT).cloned().unwrap_or_else(|| hollow_box(w, h));
        Ok(GlyphAtlas {
            glyph_width: w,
            glyph_height: h,
            glyphs,
            replacement,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (&c, g) in &self.glyphs {
            let _ = writeln!(out, "{:04X}", c as u32);
            for row in g.chunks(self.glyph_width) {
                out.extend(row.iter().map(|&b| if b == 0 { '0' } else { '1' }));
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn hollow_box(w: usize, h: usize) -> Vec<u8> {
    let mut g = vec![1u8; w * h];
    let (right, bottom) = (w.saturating_sub(2), h.saturating_sub(2));
    for y in 0..=bottom {
        for x in 0..=right {
            if y == 0 || y == bottom || x == 0 || x == right {
                g[y * w + x] = 0;
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_required_charset() {
        let atlas = GlyphAtlas::builtin();
        assert_eq!((atlas.glyph_width(), atlas.glyph_height()), (6, 8));
        for c in (0x20u8..=0x7E).map(char::from) {
            assert!(atlas.contains(c), "missing {c:?}");
        }
        for c in "äöüÄÖÜß‘’“”„–—".chars() {
            assert!(atlas.contains(c), "missing {c:?}");
        }
        for (_, g) in atlas.iter() {
            assert_eq!(g.len(), 48);
        }
    }

    #[test]
    fn glyphs_are_pairwise_distinct() {
        let atlas = GlyphAtlas::builtin();
        let glyphs: Vec<_> = atlas.iter().collect();
        for (i, (a, ga)) in glyphs.iter().enumerate() {
            for (b, gb) in &glyphs[i + 1..] {
                assert_ne!(ga, gb, "{a:?} and {b:?} share a bitmap");
            }
        }
    }

    #[test]
    fn unknown_characters_use_replacement() {
        let atlas = GlyphAtlas::builtin();
        assert_eq!(atlas.glyph('\u{4E2D}'), atlas.replacement());
        assert_ne!(atlas.glyph('A'), atlas.replacement());
        assert!(atlas.replacement().contains(&0));
    }

    #[test]
    fn text_round_trip() {
        let atlas = GlyphAtlas::builtin();
        let again = GlyphAtlas::parse(&atlas.to_text()).unwrap();
        assert_eq!(atlas, again);
    }

    #[test]
    fn parse_rejects_ragged_glyphs() {
        let text = "0041\n01\n10\n0042\n011\n100\n";
        assert!(GlyphAtlas::parse(text).is_err());
        assert!(GlyphAtlas::parse("").is_err());
        assert!(GlyphAtlas::parse("zz\n01\n").is_err());
    }

    #[test]
    fn missing_replacement_gets_hollow_box() {
        let atlas = GlyphAtlas::parse("0041\n0110\n1001\n1001\n0110\n").unwrap();
        assert_eq!(atlas.len(), 1);
        assert_eq!(atlas.replacement().len(), 16);
        assert_ne!(atlas.replacement(), atlas.glyph('A'));
    }

    #[test]
    fn scaling_doubles_cells() {
        let atlas = GlyphAtlas::builtin_for(12, 16).unwrap();
        assert_eq!((atlas.glyph_width(), atlas.glyph_height()), (12, 16));
        let base = GlyphAtlas::builtin();
        let a = base.glyph('A');
        let big = atlas.glyph('A');
        for y in 0..16 {
            for x in 0..12 {
                assert_eq!(big[y * 12 + x], a[(y / 2) * 6 + x / 2]);
            }
        }
        assert!(GlyphAtlas::builtin_for(7, 8).is_err());
    }
}
