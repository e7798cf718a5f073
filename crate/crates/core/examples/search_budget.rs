//! Find the smallest k whose quantized desk model stays within a deviation
//! budget, and print every probe of the search.
//!
//!     cargo run --release --example search_budget -- [budget]

use riq::search::{riq_search, SearchParams};
use riq::toy::{desk_calibration, desk_model};

fn main() -> riq::error::Result<()> {
    let budget: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.005);
    let model = desk_model(0)?;
    let calib = desk_calibration(0)?;
    let out = riq_search(&model, &calib, budget, &SearchParams::default())?;

    println!("k in [{:.3}, {:.3}]", out.bounds.k_min, out.bounds.k_max);
    print!("{}", out.trace.to_csv());
    println!(
        "chosen k = {:.3}: deviation {:.4e}, estimated ratio {:.2}, {} evaluations",
        out.trace.chosen_k,
        out.deviation,
        out.est_ratio,
        out.trace.evaluations.len()
    );
    for (spec, delta) in out.qmodel.specs.iter().zip(out.qmodel.deltas()) {
        println!("  {:<4} delta {delta:.4e}", spec.name);
    }
    Ok(())
}
