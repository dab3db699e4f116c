//! Shows what an untrained full model predicts for a single step: every
//! pixel sits at probability 0.5 until the output head learns something.
//! Pass a checkpoint to look at a trained model instead.
//!
//!     cargo run --release --example inspect_probabilities -- [ckpt] step.pgm

use pixmt::corpus::{make_subexamples, PieceMode, SentencePair};
use pixmt::model::{Model, ModelConfig, ModelKind};
use pixmt::raster::{export_image, FrameSpec, GlyphAtlas};
use pixmt::trainer::load_checkpoint;

fn main() -> pixmt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = match args.first() {
        Some(path) if path.ends_with(".ckpt") => load_checkpoint(path)?.model,
        _ => Model::new(ModelConfig::desk(ModelKind::Full), 0)?,
    };
    let out = args.iter().find(|a| a.ends_with(".pgm")).cloned().unwrap_or_else(|| "step.pgm".into());

    let frame = FrameSpec::desk();
    let atlas = GlyphAtlas::builtin();
    let pair = SentencePair { id: 0, source: "der Hund läuft heute".into(), target: "the dog runs today".into() };
    let steps = make_subexamples(&pair, &frame, &atlas, PieceMode::Word)?;
    let step = &steps[1];
    let probs = model.predict(&step.source_image, &step.partial_input)?;

    let v = probs.values();
    let mean = v.iter().sum::<f32>() / v.len() as f32;
    let (lo, hi) = v.iter().fold((1.0f32, 0.0f32), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let confident = v.iter().filter(|&&p| !(0.1..=0.9).contains(&p)).count();
    println!("P(white): mean {mean:.4}, min {lo:.4}, max {hi:.4}, {confident} of {} pixels outside [0.1, 0.9]", v.len());
    export_image(&probs, &out)?;
    println!("probability map saved to {out}");
    Ok(())
}
