use std::fs;
use std::path::Path;

use crate::raster::{fits, FrameSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub id: usize,
    pub source: String,
    pub target: String,
}

/// Pairs read from a TSV file plus counts of what was dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedCorpus {
    pub pairs: Vec<SentencePair>,
    pub malformed: usize,
    pub unrenderable: usize,
}

/// Parses `source<TAB>target` lines. Ids are sequential over the kept pairs.
pub fn parse_tsv(text: &str, frame: &FrameSpec) -> LoadedCorpus {
    let mut out = LoadedCorpus::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.trim().is_empty()) {
            log::debug!("line {}: expected two non-empty tab-separated fields", lineno + 1);
            out.malformed += 1;
            continue;
        }
        if !fits(fields[0], frame) || !fits(fields[1], frame) {
            log::debug!("line {}: sentence does not fit a {}x{} frame", lineno + 1, frame.width, frame.height);
            out.unrenderable += 1;
            continue;
        }
        out.pairs.push(SentencePair {
            id: out.pairs.len(),
            source: fields[0].to_string(),
            target: fields[1].to_string(),
        });
    }
    if out.malformed + out.unrenderable > 0 {
        log::warn!("skipped {} malformed and {} unrenderable lines", out.malformed, out.unrenderable);
    }
    out
}

pub fn load_tsv(path: impl AsRef<Path>, frame: &FrameSpec) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_tsv(&text, frame))
}

pub fn write_tsv(pairs: &[SentencePair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in pairs {
        text.push_str(&p.source);
        text.push('\t');
        text.push_str(&p.target);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
