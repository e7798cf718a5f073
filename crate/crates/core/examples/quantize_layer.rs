//! Quantize one Gaussian layer with the norm-proportional bin width and
//! compare the measured distortion with the value predicted from Δ.
//!
//!     cargo run --example quantize_layer -- [k]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use riq::forward::layer_distortion;
use riq::quant::{
    delta_for_layer, distortion_from_delta, empirical_entropy, layer_rate, quantize_uniform,
    QuantConfig,
};

fn main() -> riq::error::Result<()> {
    let k: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::new(0.0, 0.05).unwrap();
    let w: Vec<f32> = (0..65_536).map(|_| normal.sample(&mut rng)).collect();
    let norm = w.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();

    for eps0 in [0.0, 0.01] {
        let config = QuantConfig::new(k, eps0);
        let delta = delta_for_layer(&w, &config)?;
        let q = quantize_uniform(&w, delta)?;
        let (eps, theta) = layer_distortion(&w, &q.reconstruct_f32())?;
        println!("k = {k}, eps0 = {eps0}");
        println!("  delta        {delta:.6e}");
        println!("  symbols      [{}, {}]", q.min_symbol, q.max_symbol);
        println!("  rate         {:.3} bits", layer_rate(&w, delta)?);
        println!("  entropy      {:.3} bits", empirical_entropy(&q.symbols)?);
        println!(
            "  distortion   {eps:.4e} (predicted {:.4e})",
            distortion_from_delta(delta, norm, w.len())
        );
        println!("  angle        {theta:.4e} rad");
    }
    Ok(())
}
