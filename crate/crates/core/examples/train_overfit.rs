//! Overfits the desk full model on 32 synthetic pairs and saves a
//! checkpoint. Takes roughly a quarter of an hour at the default 2000 steps.
//!
//!     cargo run --release --example train_overfit -- 2000 overfit.ckpt [baseline]

use pixmt::corpus::{split_holdout, toy_corpus, Dataset, PieceMode};
use pixmt::model::{Model, ModelConfig, ModelKind};
use pixmt::raster::{FrameSpec, GlyphAtlas};
use pixmt::trainer::{curve_csv, save_checkpoint, train, Checkpoint, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(2000, |s| s.parse().expect("step count"));
    let out = args.next().unwrap_or_else(|| "overfit.ckpt".into());
    let kind: ModelKind = args.next().map_or(Ok(ModelKind::Full), |s| s.parse())?;

    let atlas = GlyphAtlas::builtin();
    let (train_pairs, dev_pairs) = split_holdout(&toy_corpus(36, 0), 0.1);
    let data = Dataset::build(train_pairs, FrameSpec::desk(), &atlas, PieceMode::Word)?;
    let dev = Dataset::build(dev_pairs, FrameSpec::desk(), &atlas, PieceMode::Word)?;

    let config = TrainConfig { epochs: 10_000, max_steps: Some(steps), eval_every: 10, ..Default::default() };
    let model = Model::new(ModelConfig::desk(kind), config.seed)?;
    let run = train(&config, Checkpoint::fresh(model, config.lr, config.clip_norm), &data, Some(&dev))?;

    save_checkpoint(&run.checkpoint, &out)?;
    std::fs::write(format!("{out}.loss.csv"), curve_csv(&run.curve))?;
    println!("saved {out} after {} steps", run.checkpoint.step);
    Ok(())
}
