//! Pack a quantized model into a `.rqz` archive, reopen it, and decode a
//! single layer without touching the others.
//!
//!     cargo run --release --example archive_roundtrip

use riq::archive::{compress, compression_ratio, CompressedArchive};
use riq::quant::{quantize_model, QuantConfig};
use riq::search::k_bounds;
use riq::toy::desk_model;

fn main() -> riq::error::Result<()> {
    let model = desk_model(0)?;
    let k = 25.0 * k_bounds(&model, 0.01)?.k_min;
    let q = quantize_model(&model, &QuantConfig::new(k, 0.01))?;
    let archive = compress(&q)?;
    let bytes = archive.to_bytes()?;
    let ratio = compression_ratio(&q, &archive)?;
    println!(
        "{} bytes ({} payload), ratio ×{:.3} measured, ×{:.3} estimated",
        bytes.len(),
        ratio.payload_bytes,
        ratio.actual,
        ratio.estimated
    );

    let back = CompressedArchive::from_bytes(&bytes)?;
    assert_eq!(back.to_quantized()?, q);
    let fc3 = back.decode_layer("fc3")?;
    assert_eq!(fc3.weights[0], q.layers[2].reconstruct_f32());
    println!("decoded fc3 alone: {} weights", fc3.weights[0].len());

    let mut corrupt = bytes.clone();
    corrupt[bytes.len() / 2] ^= 0x10;
    println!(
        "flipped bit: {}",
        CompressedArchive::from_bytes(&corrupt).unwrap_err()
    );
    Ok(())
}
