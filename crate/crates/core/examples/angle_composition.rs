//! How well the whole-model rotation angle is a norm-weighted mix of the
//! per-layer angles, from coarse to fine quantization.
//!
//!     cargo run --release --example angle_composition

use riq::analysis::check_angle_composition;
use riq::quant::{quantize_model, QuantConfig};
use riq::search::k_bounds;
use riq::toy::desk_model;

fn main() -> riq::error::Result<()> {
    let model = desk_model(0)?;
    let k_min = k_bounds(&model, 0.01)?.k_min;
    println!(
        "{:>8} {:>12} {:>12} {:>9}",
        "k/k_min", "max eps", "residual", "regime"
    );
    for factor in [1.0, 2.0, 4.0, 16.0, 64.0, 256.0] {
        let q = quantize_model(&model, &QuantConfig::new(factor * k_min, 0.01))?.to_model()?;
        let r = check_angle_composition(&model, &q)?;
        println!(
            "{factor:>8} {:>12.3e} {:>12.3e} {:>9}",
            r.max_distortion, r.residual, r.in_regime
        );
    }
    Ok(())
}
