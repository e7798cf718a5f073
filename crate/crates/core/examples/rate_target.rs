//! The dual search: the most accurate quantization that still compresses by
//! a requested factor.
//!
//!     cargo run --release --example rate_target -- [ratio]

use riq::search::{rate_targeted_search, SearchParams};
use riq::toy::{desk_calibration, desk_model};

fn main() -> riq::error::Result<()> {
    let target: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(8.0);
    let model = desk_model(0)?;
    let calib = desk_calibration(0)?;
    let out = rate_targeted_search(&model, &calib, target, &SearchParams::default())?;
    println!(
        "target ×{target}: k = {:.3}, estimated ratio {:.3}, deviation {:.4e} ({} evaluations)",
        out.trace.chosen_k,
        out.est_ratio,
        out.deviation,
        out.trace.evaluations.len()
    );
    Ok(())
}
