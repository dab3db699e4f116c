//! Runs the finite-difference gradient suite over every differentiable op.

use pixmt::autodiff::{gradcheck_suite, SUITE_TOLERANCE};

fn main() -> pixmt::Result<()> {
    let cases = gradcheck_suite(0)?;
    for c in &cases {
        println!("{:<40} {:.3e} {}", c.name, c.max_relative_error, if c.passed() { "ok" } else { "FAIL" });
    }
    let worst = cases.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);
    println!("worst {worst:.3e} (tolerance {SUITE_TOLERANCE:e})");
    Ok(())
}
