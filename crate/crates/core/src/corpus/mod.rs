//! Sentence pairs, piece splitting and teacher-forced sub-examples.

mod dataset;
mod pair;
mod pieces;
mod steps;
mod toy;

pub use dataset::Dataset;
pub use pair::{load_tsv, parse_tsv, write_tsv, LoadedCorpus, SentencePair};
pub use pieces::{split_pieces, PieceMode, PieceSplit};
pub use steps::{build_steps, make_subexamples, TrainingStep};
pub use toy::{split_holdout, toy_corpus, toy_corpus_size};
