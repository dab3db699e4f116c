//! Scores a checkpoint on the overfit corpus: pixel NLL, OCR BLEU and exact
//! match on the train and held-out splits, printed as a comparison table.
//!
//!     cargo run --release --example evaluate -- overfit.ckpt [baseline.ckpt]

use pixmt::corpus::{split_holdout, toy_corpus, PieceMode};
use pixmt::evalsuite::{comparison_table, evaluate, EvalReport, TableRow};
use pixmt::raster::GlyphAtlas;
use pixmt::trainer::load_checkpoint;

fn main() -> pixmt::Result<()> {
    let atlas = GlyphAtlas::builtin();
    let (train, dev) = split_holdout(&toy_corpus(36, 0), 0.1);

    let mut reports: Vec<(String, EvalReport, EvalReport)> = Vec::new();
    for path in std::env::args().skip(1) {
        let model = load_checkpoint(&path)?.model;
        let on_train = evaluate(&model, &train, &atlas, PieceMode::Word)?;
        let on_dev = evaluate(&model, &dev, &atlas, PieceMode::Word)?;
        for rec in &on_dev.records {
            println!("{path}: {:?} -> {:?}", rec.reference, rec.transcription);
        }
        reports.push((model.kind().to_string(), on_train, on_dev));
    }
    let rows: Vec<TableRow> = reports
        .iter()
        .map(|(label, t, d)| TableRow { label, train: Some(t), dev: Some(d) })
        .collect();
    print!("{}", comparison_table(&rows));
    Ok(())
}
