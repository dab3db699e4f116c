//! Template-matching OCR, corpus BLEU and pixel NLL evaluation.

mod bleu;
mod ocr;
mod report;

pub use bleu::bleu;
pub use ocr::{ocr, Ocr};
pub use report::{comparison_table, corpus_nll, evaluate, evaluate_with_steps, EvalReport, EvalSummary, SentenceRecord, TableRow};
