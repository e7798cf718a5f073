//! Sweep k over the upper half of its interval, print the rate-distortion
//! points, and fit deviation ≈ a/k².
//!
//!     cargo run --release --example rate_distortion_sweep -- [eps0]

use riq::analysis::{
    fit_inverse_square, high_rate_half, log_spaced_grid, sweep, DEFAULT_GRID_POINTS,
};
use riq::search::k_bounds;
use riq::toy::{desk_calibration, desk_model};

fn main() -> riq::error::Result<()> {
    let eps0: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);
    let model = desk_model(0)?;
    let calib = desk_calibration(0)?;
    let bounds = k_bounds(&model, 0.01)?;
    let (lo, hi) = high_rate_half(&bounds);
    let grid = log_spaced_grid(lo, hi, DEFAULT_GRID_POINTS)?;
    let points = sweep(&model, &calib, &grid, eps0, &bounds)?;

    println!(
        "{:>10} {:>12} {:>8} {:>8}",
        "k", "deviation", "entropy", "ratio"
    );
    for p in &points {
        println!(
            "{:>10.2} {:>12.4e} {:>8.3} {:>8.3}",
            p.k,
            p.mean_deviation,
            p.mean_entropy,
            p.actual_ratio.unwrap_or(f64::NAN)
        );
    }
    let fit = fit_inverse_square(
        &points
            .iter()
            .map(|p| (p.k, p.mean_deviation))
            .collect::<Vec<_>>(),
    )?;
    println!("deviation ≈ {:.4e}/k², r² = {:.4}", fit.a, fit.r_squared);
    Ok(())
}
