//! Write the five-layer desk model and its calibration set to disk, then
//! load them back.
//!
//!     cargo run --example model_io -- [out_dir]

use std::path::PathBuf;

use riq::forward::{load_calibration, save_calibration};
use riq::model::{load_model, save_model};
use riq::toy::{desk_calibration, desk_model};

fn main() -> riq::error::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "desk".into()));
    let model = desk_model(0)?;
    let calib = desk_calibration(0)?;
    save_model(&model, dir.join("desk.riqm"))?;
    save_calibration(&calib, dir.join("calib.bin"))?;

    let back = load_model(dir.join("desk.riqm"))?;
    assert_eq!(back, model);
    assert_eq!(
        load_calibration(dir.join("calib.bin"))?.samples,
        calib.samples
    );
    for (spec, w) in back.layers.iter().zip(&back.weights) {
        println!("{:<4} {:?} {:>6} weights", spec.name, spec.shape, w.len());
    }
    println!("wrote {}", dir.display());
    Ok(())
}
