use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// How a sentence is cut into pieces for stepwise generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PieceMode {
    #[default]
    Word,
    Char,
}

impl FromStr for PieceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(PieceMode::Word),
            "char" => Ok(PieceMode::Char),
            other => Err(Error::Config(format!("unknown piece mode {other:?} (expected word or char)"))),
        }
    }
}

impl fmt::Display for PieceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PieceMode::Word => "word",
            PieceMode::Char => "char",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PieceSplit {
    pub mode: PieceMode,
    pub pieces: Vec<String>,
}

impl PieceSplit {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// The first `n` pieces joined back together.
    pub fn prefix(&self, n: usize) -> String {
        self.pieces[..n].concat()
    }
}

/// Word mode keeps each piece's trailing spaces; char mode yields one piece per character.
pub fn split_pieces(sentence: &str, mode: PieceMode) -> PieceSplit {
    let pieces = match mode {
        PieceMode::Char => sentence.chars().map(String::from).collect(),
        PieceMode::Word => {
            let mut pieces = Vec::new();
            let mut current = String::new();
            for ch in sentence.chars() {
                if ch != ' ' && current.ends_with(' ') {
                    pieces.push(std::mem::take(&mut current));
                }
                current.push(ch);
            }
            if !current.is_empty() {
                pieces.push(current);
            }
            pieces
        }
    };
    PieceSplit { mode, pieces }
}
