//! Renders a sentence into the desk frame, prints it as ASCII art and writes
//! a PGM next to it.
//!
//!     cargo run --example render_text -- "der Hund läuft heute" out.pgm

use pixmt::evalsuite::ocr;
use pixmt::raster::{export_image, render_text, FrameSpec, GlyphAtlas};

fn main() -> pixmt::Result<()> {
    let mut args = std::env::args().skip(1);
    let text = args.next().unwrap_or_else(|| "der Hund läuft heute".into());
    let out = args.next().unwrap_or_else(|| "render_text.pgm".into());

    let frame = FrameSpec::desk();
    let atlas = GlyphAtlas::builtin();
    let img = render_text(&text, &frame, &atlas)?;
    for r in 0..img.height() {
        let row: String = (0..img.width().min(120)).map(|c| if img.is_ink(r, c) { '#' } else { '.' }).collect();
        println!("{row}");
    }
    export_image(&img, &out)?;
    println!("{} ink pixels, reads back as {:?}, saved to {out}", img.ink_count(), ocr(&img, &frame, &atlas));
    Ok(())
}
