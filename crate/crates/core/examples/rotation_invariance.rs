//! Rotate a layer with random orthogonal matrices: the RIQ bin width only
//! sees the norm and stays put, the range-based step moves.
//!
//!     cargo run --release --example rotation_invariance

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riq::analysis::{random_rotation, rotate};
use riq::quant::{delta_for_layer, range_step, QuantConfig};

fn main() -> riq::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
    let config = QuantConfig::new(10.0, 0.01);
    let riq0 = delta_for_layer(&w, &config)?;
    let range0 = range_step(&w, 8)?;
    println!("{:>4} {:>14} {:>14}", "seed", "riq change", "range change");
    for seed in 0..10 {
        let v = rotate(&random_rotation(256, seed)?, &w)?;
        println!(
            "{seed:>4} {:>14.3e} {:>14.3e}",
            (delta_for_layer(&v, &config)? - riq0).abs() / riq0,
            (range_step(&v, 8)? - range0).abs() / range0
        );
    }
    Ok(())
}
