use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::PieceMode;
use crate::model::{ModelKind, Preset};
use crate::raster::{FrameSpec, GlyphAtlas};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Environment variable naming a default configuration file.
pub const CONFIG_ENV: &str = "PIXMT_CONFIG";

/// Keys accepted in configuration files and by `--set`.
pub const KEYS: &[&str] = &[
    "frame",
    "mode",
    "preset",
    "model",
    "seed",
    "batch_size",
    "epochs",
    "max_steps",
    "lr",
    "clip_norm",
    "eval_every",
    "atlas",
    "decode_steps",
];

/// Effective settings after layering defaults, the config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub frame: (usize, usize),
    pub mode: PieceMode,
    pub preset: Preset,
    pub model: ModelKind,
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_steps: Option<u64>,
    pub lr: f32,
    pub clip_norm: Option<f32>,
    pub eval_every: usize,
    pub atlas: Option<PathBuf>,
    pub decode_steps: Option<usize>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        CliConfig {
            frame: (256, 16),
            mode: PieceMode::Word,
            preset: Preset::Desk,
            model: ModelKind::Full,
            seed: t.seed,
            batch_size: t.batch_size,
            epochs: t.epochs,
            max_steps: t.max_steps,
            lr: t.lr,
            clip_norm: t.clip_norm,
            eval_every: t.eval_every,
            atlas: None,
            decode_steps: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl CliConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "frame" => self.frame = FrameSpec::parse_size(value)?,
            "mode" => self.mode = value.parse()?,
            "preset" => self.preset = value.parse()?,
            "model" => self.model = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "max_steps" => self.max_steps = optional(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "clip_norm" => self.clip_norm = optional(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "atlas" => self.atlas = optional(key, value)?,
            "decode_steps" => self.decode_steps = optional(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn frame_spec(&self) -> Result<FrameSpec> {
        let spec = FrameSpec::for_size(self.frame.0, self.frame.1);
        spec.validate()?;
        Ok(spec)
    }

    pub fn atlas_for(&self, frame: &FrameSpec) -> Result<GlyphAtlas> {
        match &self.atlas {
            Some(path) => GlyphAtlas::load(path),
            None => GlyphAtlas::builtin_for(frame.glyph_width, frame.glyph_height),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            max_steps: self.max_steps,
            seed: self.seed,
            lr: self.lr,
            clip_norm: self.clip_norm,
            eval_every: self.eval_every,
        }
    }

    /// The effective configuration in file syntax.
    pub fn to_text(&self) -> String {
        fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or("none".into(), |v| v.to_string())
        }
        let mut out = String::new();
        let atlas = self.atlas.as_ref().map(|p| p.display().to_string());
        let _ = writeln!(out, "frame = {}x{}", self.frame.0, self.frame.1);
        let _ = writeln!(out, "mode = {}", self.mode);
        let _ = writeln!(out, "preset = {}", self.preset);
        let _ = writeln!(out, "model = {}", self.model);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "max_steps = {}", opt(&self.max_steps));
        let _ = writeln!(out, "lr = {}", self.lr);
        let _ = writeln!(out, "clip_norm = {}", opt(&self.clip_norm));
        let _ = writeln!(out, "eval_every = {}", self.eval_every);
        let _ = writeln!(out, "atlas = {}", opt(&atlas));
        let _ = writeln!(out, "decode_steps = {}", opt(&self.decode_steps));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = CliConfig::default();
        cfg.apply_text("seed = 9\nmax_steps = 40 # cap\nmode=char\n").unwrap();
        assert_eq!((cfg.seed, cfg.max_steps, cfg.mode), (9, Some(40), PieceMode::Char));
        let mut back = CliConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        for key in KEYS {
            assert!(cfg.to_text().contains(&format!("{key} = ")), "{key}");
        }
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let mut cfg = CliConfig::default();
        assert!(matches!(cfg.apply_text("colour = red"), Err(Error::Config(_))));
        assert!(cfg.apply_text("seed = minus one").is_err());
        assert!(cfg.apply_text("just words").is_err());
        assert!(cfg.set("model", "gan").is_err());
    }
}
