use std::fs;
use std::path::Path;

use serde::Serialize;

use super::bleu::bleu;
use super::ocr::Ocr;
use crate::corpus::{Dataset, PieceMode, SentencePair};
use crate::inference::{default_max_steps, generate, PixelModel};
use crate::raster::{render_text, GlyphAtlas};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceRecord {
    pub id: usize,
    pub reference: String,
    pub transcription: String,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub model: String,
    pub sentences: usize,
    /// Teacher-forced pixel NLL in nats per pixel.
    pub nll: f64,
    pub bleu: f64,
    /// Fraction of transcriptions equal to their reference.
    pub exact_match: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub summary: EvalSummary,
    pub records: Vec<SentenceRecord>,
}

impl EvalReport {
    /// One JSON object per sentence followed by a `{"summary": ..}` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({ "summary": &self.summary });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

/// Teacher-forced pixel NLL: all sub-examples for stepwise models, whole
/// pairs otherwise.
pub fn corpus_nll(model: &impl PixelModel, data: &Dataset) -> Result<f64> {
    let items: Vec<_> = if model.is_stepwise() {
        data.steps.iter().collect()
    } else {
        data.terminal_steps().collect()
    };
    model.pixel_nll(&items)
}

/// Translates every source, transcribes the output, and scores it.
pub fn evaluate(
    model: &impl PixelModel,
    pairs: &[SentencePair],
    atlas: &GlyphAtlas,
    mode: PieceMode,
) -> Result<EvalReport> {
    evaluate_with_steps(model, pairs, atlas, mode, default_max_steps(model.frame()))
}

/// [`evaluate`] with an explicit decoding step limit.
pub fn evaluate_with_steps(
    model: &impl PixelModel,
    pairs: &[SentencePair],
    atlas: &GlyphAtlas,
    mode: PieceMode,
    max_steps: usize,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let frame = *model.frame();
    let data = Dataset::build(pairs.to_vec(), frame, atlas, mode)?;
    let nll = corpus_nll(model, &data)?;
    let reader = Ocr::new(&frame, atlas);

    let mut records = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let source = render_text(&pair.source, &frame, atlas)?;
        let output = generate(model, &source, max_steps)?;
        let transcription = reader.read(&output);
        records.push(SentenceRecord {
            id: pair.id,
            exact: transcription == pair.target,
            reference: pair.target.clone(),
            transcription,
        });
    }
    let hyps: Vec<String> = records.iter().map(|r| r.transcription.clone()).collect();
    let refs: Vec<String> = records.iter().map(|r| r.reference.clone()).collect();
    let exact = records.iter().filter(|r| r.exact).count();
    let summary = EvalSummary {
        model: model.name(),
        sentences: records.len(),
        nll,
        bleu: bleu(&hyps, &refs)?,
        exact_match: exact as f64 / records.len() as f64,
    };
    Ok(EvalReport { summary, records })
}

/// One model's reports on the train and dev splits.
#[derive(Debug, Clone, Copy)]
pub struct TableRow<'a> {
    pub label: &'a str,
    pub train: Option<&'a EvalReport>,
    pub dev: Option<&'a EvalReport>,
}

/// Plain-text NLL/BLEU table with train and dev columns.
pub fn comparison_table(rows: &[TableRow<'_>]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max("Model".len());
    let cell = |r: Option<&EvalReport>, f: fn(&EvalSummary) -> String| r.map_or("-".to_string(), |r| f(&r.summary));
    let mut out = format!("{:<6} {:<width$} {:>10} {:>10}\n", "", "Model", "Train Set", "Dev Set");
    for (metric, f) in [
        ("NLL", (|s: &EvalSummary| format!("{:.3}", s.nll)) as fn(&EvalSummary) -> String),
        ("BLEU", |s: &EvalSummary| format!("{:.1}", s.bleu)),
    ] {
        for (i, r) in rows.iter().enumerate() {
            let tag = if i == 0 { metric } else { "" };
            out.push_str(&format!(
                "{tag:<6} {:<width$} {:>10} {:>10}\n",
                r.label,
                cell(r.train, f),
                cell(r.dev, f)
            ));
        }
    }
    out
}
