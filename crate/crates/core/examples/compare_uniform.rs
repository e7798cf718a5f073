//! Range-based R-bit quantization of the desk model against RIQ searched to
//! the same output deviation, both entropy coded.
//!
//!     cargo run --release --example compare_uniform -- [bits,...]

use riq::analysis::compare_uniform;
use riq::search::SearchParams;
use riq::toy::{desk_calibration, desk_model};

fn main() -> riq::error::Result<()> {
    let bits: Vec<u32> = std::env::args()
        .nth(1)
        .map(|s| s.split(',').filter_map(|b| b.trim().parse().ok()).collect())
        .unwrap_or_else(|| vec![2, 3, 4, 5, 6]);
    let model = desk_model(0)?;
    let calib = desk_calibration(0)?;
    let fmt = |r: Option<f64>| r.map(|r| format!("{r:.3}")).unwrap_or_else(|| "-".into());
    println!(
        "{:>4} {:>11} {:>8} | {:>9} {:>11} {:>8}",
        "bits", "deviation", "ratio", "riq k", "deviation", "ratio"
    );
    for p in compare_uniform(&model, &calib, &bits, &SearchParams::default())? {
        match &p.riq {
            Some(r) => println!(
                "{:>4} {:>11.4e} {:>8} | {:>9.2} {:>11.4e} {:>8}{}",
                p.bits,
                p.deviation,
                fmt(p.actual_ratio),
                r.k,
                r.deviation,
                fmt(r.actual_ratio),
                if r.satisfied { "" } else { " (not reached)" }
            ),
            None => println!(
                "{:>4} {:>11.4e} {:>8} |",
                p.bits,
                p.deviation,
                fmt(p.actual_ratio)
            ),
        }
    }
    Ok(())
}
