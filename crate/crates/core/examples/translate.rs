//! Translates one German sentence with a trained checkpoint, printing the
//! OCR reading of every decoding step.
//!
//!     cargo run --release --example translate -- overfit.ckpt "der Hund läuft heute" trace_dir

use pixmt::evalsuite::Ocr;
use pixmt::inference::{default_max_steps, translate};
use pixmt::raster::{render_text, GlyphAtlas};
use pixmt::trainer::load_checkpoint;

fn main() -> pixmt::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next().unwrap_or_else(|| "overfit.ckpt".into());
    let text = args.next().unwrap_or_else(|| "der Hund läuft heute".into());
    let trace_dir = args.next();

    let model = load_checkpoint(&ckpt)?.model;
    let frame = model.config().frame;
    let atlas = GlyphAtlas::builtin_for(frame.glyph_width, frame.glyph_height)?;
    let source = render_text(&text, &frame, &atlas)?;
    let trace = translate(&model, &source, default_max_steps(&frame))?;

    let reader = Ocr::new(&frame, &atlas);
    for step in &trace.steps {
        println!("step {:2}: {}", step.step, reader.read(&step.image));
    }
    println!("stopped by {:?} after {} steps", trace.reason, trace.len());
    if let Some(dir) = trace_dir {
        trace.dump(&dir)?;
    }
    Ok(())
}
