use super::pair::SentencePair;
use super::pieces::{split_pieces, PieceMode};
use crate::raster::{render_text, BinaryImage, FrameSpec, GlyphAtlas};
use crate::Result;

/// One teacher-forced sub-example: source and the first `n - 1` pieces in,
/// the first `n` pieces out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingStep {
    pub pair_id: usize,
    pub step_index: usize,
    pub is_terminal: bool,
    pub source_image: BinaryImage,
    pub partial_input: BinaryImage,
    pub target: BinaryImage,
}

/// Emits one step per target piece followed by a terminal step whose input
/// and output are both the full target render.
pub fn make_subexamples(
    pair: &SentencePair,
    frame: &FrameSpec,
    atlas: &GlyphAtlas,
    mode: PieceMode,
) -> Result<Vec<TrainingStep>> {
    let source_image = render_text(&pair.source, frame, atlas)?;
    let split = split_pieces(&pair.target, mode);
    let mut renders = Vec::with_capacity(split.len() + 1);
    for n in 0..=split.len() {
        renders.push(render_text(&split.prefix(n), frame, atlas)?);
    }
    let k = split.len();
    let mut steps = Vec::with_capacity(k + 1);
    for n in 1..=k {
        steps.push(TrainingStep {
            pair_id: pair.id,
            step_index: n,
            is_terminal: false,
            source_image: source_image.clone(),
            partial_input: renders[n - 1].clone(),
            target: renders[n].clone(),
        });
    }
    steps.push(TrainingStep {
        pair_id: pair.id,
        step_index: k + 1,
        is_terminal: true,
        source_image,
        partial_input: renders[k].clone(),
        target: renders[k].clone(),
    });
    Ok(steps)
}

/// Sub-examples for every pair, ordered by pair id then step index.
pub fn build_steps(
    pairs: &[SentencePair],
    frame: &FrameSpec,
    atlas: &GlyphAtlas,
    mode: PieceMode,
) -> Result<Vec<TrainingStep>> {
    let mut steps = Vec::new();
    for pair in pairs {
        steps.extend(make_subexamples(pair, frame, atlas, mode)?);
    }
    steps.sort_by_key(|s| (s.pair_id, s.step_index));
    Ok(steps)
}
