//! Generates the synthetic German-English corpus and decomposes it into
//! per-piece training steps on disk.
//!
//!     cargo run --example build_dataset -- 12 /tmp/toy_data

use pixmt::corpus::{toy_corpus, Dataset, PieceMode};
use pixmt::raster::{FrameSpec, GlyphAtlas};

fn main() -> pixmt::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(12, |s| s.parse().expect("pair count"));
    let dir = args.next().unwrap_or_else(|| "toy_data".into());

    let pairs = toy_corpus(n, 0);
    let data = Dataset::build(pairs, FrameSpec::desk(), &GlyphAtlas::builtin(), PieceMode::Word)?;
    for step in data.steps.iter().take(5) {
        println!(
            "pair {} step {} terminal {} ink {} -> {}",
            step.pair_id,
            step.step_index,
            step.is_terminal,
            step.partial_input.ink_count(),
            step.target.ink_count()
        );
    }
    data.save(&dir)?;
    println!("{} pairs, {} steps written to {dir}", data.pairs.len(), data.steps.len());
    Ok(())
}
