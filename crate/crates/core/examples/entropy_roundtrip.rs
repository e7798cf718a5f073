//! rANS-code the symbols of each quantized desk layer and compare the coded
//! size with the empirical entropy.
//!
//!     cargo run --release --example entropy_roundtrip

use riq::quant::{empirical_entropy, histogram, quantize_model, QuantConfig};
use riq::rans::{build_table, decode, encode, precision_for};
use riq::search::k_bounds;
use riq::toy::desk_model;

fn main() -> riq::error::Result<()> {
    let model = desk_model(0)?;
    let k = 20.0 * k_bounds(&model, 0.01)?.k_min;
    let q = quantize_model(&model, &QuantConfig::new(k, 0.01))?;
    println!(
        "{:<4} {:>6} {:>9} {:>9} {:>9}",
        "", "n", "alphabet", "entropy", "coded"
    );
    for (spec, layer) in q.specs.iter().zip(&q.layers) {
        let table = build_table(
            &layer.symbols,
            precision_for(histogram(&layer.symbols).len()),
        )?;
        let stream = encode(&layer.symbols, &table)?;
        assert_eq!(decode(&stream, &table, layer.len())?, layer.symbols);
        println!(
            "{:<4} {:>6} {:>9} {:>9.4} {:>9.4}",
            spec.name,
            layer.len(),
            table.len(),
            empirical_entropy(&layer.symbols)?,
            8.0 * stream.len() as f64 / layer.len() as f64
        );
    }
    Ok(())
}
