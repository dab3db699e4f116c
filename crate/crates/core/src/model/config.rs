use std::fmt;
use std::str::FromStr;

use crate::raster::FrameSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Encoder, pooled latent vector, decoder; one parallel prediction.
    Baseline,
    /// Two encoders, self-attention over both sequences, decoder; stepwise.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

/// One convolution row of the encoder table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvRow {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

const fn row(in_ch: usize, out_ch: usize, stride: usize) -> ConvRow {
    ConvRow { in_ch, out_ch, kernel: 3, stride }
}

/// Channel table of the paper-scale encoder.
pub const PAPER_ROWS: [ConvRow; 8] = [
    row(3, 64, 1),
    row(64, 128, 2),
    row(128, 128, 1),
    row(128, 256, 2),
    row(256, 256, 1),
    row(256, 512, 2),
    row(512, 512, 1),
    row(512, 512, 2),
];

pub const DESK_ROWS: [ConvRow; 8] = [
    row(1, 16, 1),
    row(16, 32, 2),
    row(32, 32, 1),
    row(32, 64, 2),
    row(64, 64, 1),
    row(64, 128, 2),
    row(128, 128, 1),
    row(128, 128, 2),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub preset: Preset,
    pub frame: FrameSpec,
    pub in_channels: usize,
    /// Pairs of rows form residual blocks: a stride-1 conv then a stride-2 conv.
    pub rows: Vec<ConvRow>,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
}

/// Channel plan of one residual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPlan {
    pub in_ch: usize,
    pub mid_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
}

impl ModelConfig {
    pub fn paper(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            preset: Preset::Paper,
            frame: FrameSpec::paper(),
            in_channels: 3,
            rows: PAPER_ROWS.to_vec(),
            d_model: 512,
            layers: 6,
            heads: 8,
            ff_dim: 2048,
        }
    }

    pub fn desk(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            preset: Preset::Desk,
            frame: FrameSpec::desk(),
            in_channels: 1,
            rows: DESK_ROWS.to_vec(),
            d_model: 128,
            layers: 2,
            heads: 4,
            ff_dim: 512,
        }
    }

    pub fn preset(preset: Preset, kind: ModelKind) -> Self {
        match preset {
            Preset::Paper => Self::paper(kind),
            Preset::Desk => Self::desk(kind),
        }
    }

    pub fn blocks(&self) -> Vec<BlockPlan> {
        self.rows
            .chunks(2)
            .map(|p| BlockPlan { in_ch: p[0].in_ch, mid_ch: p[0].out_ch, out_ch: p[1].out_ch, kernel: p[0].kernel })
            .collect()
    }

    /// `(channels, rows, columns)` of the final encoder feature map.
    pub fn latent_shape(&self) -> (usize, usize, usize) {
        let mut h = self.frame.height;
        let mut w = self.frame.width;
        for r in &self.rows {
            h = h.div_ceil(r.stride);
            w = w.div_ceil(r.stride);
        }
        (self.rows.last().map_or(self.in_channels, |r| r.out_ch), h, w)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.in_channels != 1 && self.in_channels != 3 {
            return bad(format!("in_channels must be 1 or 3, got {}", self.in_channels));
        }
        if self.rows.is_empty() || self.rows.len() % 2 != 0 {
            return bad(format!("encoder needs an even, non-zero number of rows, got {}", self.rows.len()));
        }
        let mut ch = self.in_channels;
        for (i, r) in self.rows.iter().enumerate() {
            let want_stride = if i % 2 == 0 { 1 } else { 2 };
            if r.in_ch != ch || r.out_ch == 0 || r.kernel % 2 == 0 || r.stride != want_stride {
                return bad(format!("encoder row {i} {r:?} does not chain (expected in {ch}, stride {want_stride})"));
            }
            if i % 2 == 1 && r.kernel != self.rows[i - 1].kernel {
                return bad(format!("encoder row {i} kernel differs from its block partner"));
            }
            ch = r.out_ch;
        }
        let blocks = self.rows.len() / 2;
        let factor = 1usize << blocks;
        if self.frame.width % factor != 0 || self.frame.height % factor != 0 {
            return bad(format!(
                "frame {}x{} must be divisible by {factor} for {blocks} blocks",
                self.frame.width, self.frame.height
            ));
        }
        if self.kind == ModelKind::Full {
            if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
                return bad(format!("d_model {} not divisible by heads {}", self.d_model, self.heads));
            }
            if self.ff_dim == 0 {
                return bad("ff_dim must be positive".into());
            }
        }
        Ok(())
    }

    /// `key=value` lines, the checkpoint header format.
    pub fn to_text(&self) -> String {
        let f = &self.frame;
        let rows: Vec<String> =
            self.rows.iter().map(|r| format!("{}:{}:{}:{}", r.in_ch, r.out_ch, r.kernel, r.stride)).collect();
        format!(
            "kind={}\npreset={}\nframe={}x{}\nglyph={}x{}\nmargin={}\nin_channels={}\nrows={}\nd_model={}\nlayers={}\nheads={}\nff_dim={}\n",
            self.kind,
            self.preset,
            f.width,
            f.height,
            f.glyph_width,
            f.glyph_height,
            f.left_margin,
            self.in_channels,
            rows.join(","),
            self.d_model,
            self.layers,
            self.heads,
            self.ff_dim
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| malformed(format!("no '=' in {line:?}")))?;
            if kv.insert(k.trim(), v.trim()).is_some() {
                return Err(malformed(format!("duplicate key {k:?}")));
            }
        }
        let mut take = |key: &str| kv.remove(key).ok_or_else(|| malformed(format!("missing key {key:?}")));
        let num = |s: &str| s.parse::<usize>().map_err(|_| malformed(format!("bad number {s:?}")));

        let kind = take("kind")?.parse()?;
        let preset = take("preset")?.parse()?;
        let (w, h) = FrameSpec::parse_size(take("frame")?)?;
        let (gw, gh) = FrameSpec::parse_size(take("glyph")?)?;
        let margin = num(take("margin")?)?;
        let in_channels = num(take("in_channels")?)?;
        let mut rows = Vec::new();
        for spec in take("rows")?.split(',') {
            let f: Vec<&str> = spec.split(':').collect();
            if f.len() != 4 {
                return Err(malformed(format!("bad row {spec:?}")));
            }
            rows.push(ConvRow { in_ch: num(f[0])?, out_ch: num(f[1])?, kernel: num(f[2])?, stride: num(f[3])? });
        }
        let cfg = ModelConfig {
            kind,
            preset,
            frame: FrameSpec::new(w, h, gw, gh, margin)?,
            in_channels,
            rows,
            d_model: num(take("d_model")?)?,
            layers: num(take("layers")?)?,
            heads: num(take("heads")?)?,
            ff_dim: num(take("ff_dim")?)?,
        };
        if let Some(k) = kv.keys().next() {
            return Err(malformed(format!("unknown key {k:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn malformed(detail: String) -> Error {
    Error::Malformed { what: "model config", detail }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ModelKind::Baseline),
            "full" => Ok(ModelKind::Full),
            other => Err(Error::Config(format!("unknown model {other:?} (expected baseline or full)"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Full => "full",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected paper or desk)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for kind in [ModelKind::Baseline, ModelKind::Full] {
            ModelConfig::paper(kind).validate().unwrap();
            ModelConfig::desk(kind).validate().unwrap();
        }
        assert_eq!(ModelConfig::paper(ModelKind::Full).latent_shape(), (512, 2, 64));
        assert_eq!(ModelConfig::desk(ModelKind::Full).latent_shape(), (128, 1, 16));
    }

    #[test]
    fn paper_table() {
        let cfg = ModelConfig::paper(ModelKind::Full);
        let rows: Vec<_> = cfg.rows.iter().map(|r| (r.in_ch, r.out_ch, r.kernel, r.stride)).collect();
        assert_eq!(
            rows,
            [
                (3, 64, 3, 1),
                (64, 128, 3, 2),
                (128, 128, 3, 1),
                (128, 256, 3, 2),
                (256, 256, 3, 1),
                (256, 512, 3, 2),
                (512, 512, 3, 1),
                (512, 512, 3, 2)
            ]
        );
        assert_eq!((cfg.d_model, cfg.layers, cfg.ff_dim), (512, 6, 2048));
        assert_eq!((cfg.frame.width, cfg.frame.height), (1024, 32));
    }

    #[test]
    fn desk_is_quartered() {
        let paper = ModelConfig::paper(ModelKind::Full);
        let desk = ModelConfig::desk(ModelKind::Full);
        for (p, d) in paper.rows.iter().zip(&desk.rows).skip(1) {
            assert_eq!(p.out_ch / 4, d.out_ch);
        }
        assert_eq!((desk.d_model, desk.layers, desk.heads, desk.ff_dim), (128, 2, 4, 512));
    }

    #[test]
    fn text_round_trip() {
        let cfg = ModelConfig::desk(ModelKind::Baseline);
        assert_eq!(ModelConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let extra = format!("{}colour=blue\n", cfg.to_text());
        assert!(ModelConfig::parse(&extra).is_err());
        assert!(ModelConfig::parse("kind=full\n").is_err());
    }

    #[test]
    fn rejects_broken_chains() {
        let mut cfg = ModelConfig::desk(ModelKind::Full);
        cfg.rows[2].in_ch = 99;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::desk(ModelKind::Full);
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
    }
}
