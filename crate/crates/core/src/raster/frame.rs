use crate::error::{Error, Result};

/// Glyph cell size of the built-in atlas at scale 1.
pub const BASE_GLYPH_WIDTH: usize = 6;
pub const BASE_GLYPH_HEIGHT: usize = 8;

/// Geometry of the fixed canvas every sentence is drawn into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameSpec {
    pub width: usize,
    pub height: usize,
    pub glyph_width: usize,
    pub glyph_height: usize,
    pub left_margin: usize,
}

impl FrameSpec {
    pub fn new(
        width: usize,
        height: usize,
        glyph_width: usize,
        glyph_height: usize,
        left_margin: usize,
    ) -> Result<Self> {
        let frame = FrameSpec {
            width,
            height,
            glyph_width,
            glyph_height,
            left_margin,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// 256x16 frame with the unscaled 6x8 atlas.
    pub fn desk() -> Self {
        Self::for_size(256, 16)
    }

    /// 1024x32 frame with the atlas doubled to 12x16 cells.
    pub fn paper() -> Self {
        Self::for_size(1024, 32)
    }

    /// Frame of the given size with the atlas scaled by `height / 16`.
    ///
    /// Panics only if the resulting geometry is invalid (frames smaller than
    /// one glyph cell).
    pub fn for_size(width: usize, height: usize) -> Self {
        let scale = (height / 16).max(1);
        FrameSpec {
            width,
            height,
            glyph_width: BASE_GLYPH_WIDTH * scale,
            glyph_height: BASE_GLYPH_HEIGHT * scale,
            left_margin: 2 * scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.glyph_width == 0 || self.glyph_height == 0 {
            return Err(Error::Config("glyph cells must be non-empty".into()));
        }
        if self.glyph_height > self.height {
            return Err(Error::Config(format!(
                "glyph height {} exceeds frame height {}",
                self.glyph_height, self.height
            )));
        }
        if self.left_margin + self.glyph_width > self.width {
            return Err(Error::Config(format!(
                "frame width {} cannot hold a single {}-pixel glyph after a {}-pixel margin",
                self.width, self.glyph_width, self.left_margin
            )));
        }
        Ok(())
    }

    /// Number of glyph cells that fit on one line.
    pub fn capacity(&self) -> usize {
        (self.width - self.left_margin) / self.glyph_width
    }

    pub fn top_offset(&self) -> usize {
        (self.height - self.glyph_height) / 2
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Integer factor relating this frame's glyph cell to the base atlas.
    pub fn glyph_scale(&self) -> Option<usize> {
        let sx = self.glyph_width / BASE_GLYPH_WIDTH;
        let sy = self.glyph_height / BASE_GLYPH_HEIGHT;
        (sx == sy
            && sx > 0
            && sx * BASE_GLYPH_WIDTH == self.glyph_width
            && sy * BASE_GLYPH_HEIGHT == self.glyph_height)
            .then_some(sx)
    }

    /// Parses `WxH`.
    pub fn parse_size(s: &str) -> Result<(usize, usize)> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Config(format!("expected WxH, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("expected WxH, got {s:?}")))
        };
        Ok((parse(w)?, parse(h)?))
    }
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self::desk()
    }
}
