use std::fs;
use std::path::Path;

use super::pair::{load_tsv, write_tsv, SentencePair};
use super::pieces::PieceMode;
use super::steps::{build_steps, TrainingStep};
use crate::raster::{encode_pgm, read_pgm, BinaryImage, FrameSpec, GlyphAtlas};
use crate::{Error, Result};

const INDEX: &str = "index.txt";
const PAIRS: &str = "pairs.tsv";
const HEADER: &str = "# pixmt dataset v1";

/// Rendered sub-examples for a set of sentence pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub frame: FrameSpec,
    pub mode: PieceMode,
    pub pairs: Vec<SentencePair>,
    pub steps: Vec<TrainingStep>,
}

impl Dataset {
    pub fn build(pairs: Vec<SentencePair>, frame: FrameSpec, atlas: &GlyphAtlas, mode: PieceMode) -> Result<Self> {
        let steps = build_steps(&pairs, &frame, atlas, mode)?;
        Ok(Dataset { frame, mode, pairs, steps })
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Terminal steps only: one (source, full target) example per pair.
    pub fn terminal_steps(&self) -> impl Iterator<Item = &TrainingStep> {
        self.steps.iter().filter(|s| s.is_terminal)
    }

    /// Writes P5 images, `pairs.tsv` and `index.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_tsv(&self.pairs, dir.join(PAIRS))?;

        let f = &self.frame;
        let mut index = format!(
            "{HEADER}\nframe {}x{} glyph {}x{} margin {}\nmode {}\n",
            f.width, f.height, f.glyph_width, f.glyph_height, f.left_margin, self.mode
        );
        let mut written_sources = std::collections::BTreeSet::new();
        for s in &self.steps {
            let src = format!("src_{:06}.pgm", s.pair_id);
            if written_sources.insert(s.pair_id) {
                write_image(dir, &src, &s.source_image)?;
            }
            let input = format!("p{:06}_s{:03}_in.pgm", s.pair_id, s.step_index);
            let output = format!("p{:06}_s{:03}_out.pgm", s.pair_id, s.step_index);
            write_image(dir, &input, &s.partial_input)?;
            write_image(dir, &output, &s.target)?;
            index.push_str(&format!(
                "{}\t{}\t{}\t{src}\t{input}\t{output}\n",
                s.pair_id, s.step_index, s.is_terminal as u8
            ));
        }
        let path = dir.join(INDEX);
        fs::write(&path, index).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(INDEX);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(malformed("missing header line"));
        }
        let frame = parse_frame_line(lines.next().unwrap_or(""))?;
        let mode = lines
            .next()
            .and_then(|l| l.strip_prefix("mode "))
            .ok_or_else(|| malformed("missing mode line"))?
            .parse()?;

        let mut steps = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(malformed(format!("expected 6 fields: {line:?}")));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| malformed(format!("bad number {s:?}")));
            let is_terminal = match f[2] {
                "0" => false,
                "1" => true,
                other => return Err(malformed(format!("bad terminal flag {other:?}"))),
            };
            steps.push(TrainingStep {
                pair_id: num(f[0])?,
                step_index: num(f[1])?,
                is_terminal,
                source_image: read_image(dir, f[3], &frame)?,
                partial_input: read_image(dir, f[4], &frame)?,
                target: read_image(dir, f[5], &frame)?,
            });
        }
        let pairs = load_tsv(dir.join(PAIRS), &frame)?.pairs;
        Ok(Dataset { frame, mode, pairs, steps })
    }
}

fn malformed(detail: impl Into<String>) -> Error {
    Error::Malformed { what: "dataset index", detail: detail.into() }
}

fn parse_frame_line(line: &str) -> Result<FrameSpec> {
    let t: Vec<&str> = line.split_whitespace().collect();
    match t.as_slice() {
        ["frame", size, "glyph", cell, "margin", margin] => {
            let (w, h) = FrameSpec::parse_size(size)?;
            let (gw, gh) = FrameSpec::parse_size(cell)?;
            let margin = margin.parse().map_err(|_| malformed(format!("bad margin {margin:?}")))?;
            FrameSpec::new(w, h, gw, gh, margin)
        }
        _ => Err(malformed(format!("bad frame line {line:?}"))),
    }
}

fn write_image(dir: &Path, name: &str, img: &BinaryImage) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

fn read_image(dir: &Path, name: &str, frame: &FrameSpec) -> Result<BinaryImage> {
    let img = read_pgm(dir.join(name))?;
    if img.width != frame.width || img.height != frame.height {
        return Err(Error::shape(format!(
            "{name} is {}x{}, frame is {}x{}",
            img.width, img.height, frame.width, frame.height
        )));
    }
    Ok(img.to_binary())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::toy_corpus;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::build(toy_corpus(3, 0), FrameSpec::desk(), &GlyphAtlas::builtin(), PieceMode::Word).unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(ds.terminal_steps().count(), 3);
    }

    #[test]
    fn load_rejects_foreign_index() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(INDEX), "hello\n").unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::Malformed { .. })));
    }
}
