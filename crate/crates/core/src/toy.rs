//! A small deterministic network used by the examples and the test suite.

use crate::error::Result;
use crate::forward::CalibrationSet;
use crate::model::{synth_model, Activation, Init, LayerSpec, Model};

pub const DESK_INPUT: usize = 64;
pub const DESK_CALIBRATION_SAMPLES: usize = 8;

/// Five dense layers, 64 → 64 → 128 → 128 → 64 → 16, ReLU between them.
pub fn desk_arch() -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense("fc1", 64, DESK_INPUT, Activation::Relu),
        LayerSpec::dense("fc2", 128, 64, Activation::Relu),
        LayerSpec::dense("fc3", 128, 128, Activation::Relu),
        LayerSpec::dense("fc4", 64, 128, Activation::Relu),
        LayerSpec::dense("fc5", 16, 64, Activation::Identity),
    ]
}

pub fn desk_model(seed: u64) -> Result<Model> {
    synth_model(seed, &desk_arch(), Init::Gaussian)
}

pub fn desk_calibration(seed: u64) -> Result<CalibrationSet> {
    CalibrationSet::gaussian(seed, DESK_CALIBRATION_SAMPLES, &[DESK_INPUT])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_shape() {
        let m = desk_model(0).unwrap();
        assert_eq!(m.len(), 5);
        assert_eq!(m.largest_layer(), 128 * 128);
        assert_eq!(
            m.total_weights(),
            64 * 64 + 128 * 64 + 128 * 128 + 64 * 128 + 16 * 64
        );
        assert_eq!(desk_model(0).unwrap(), m);
        assert_ne!(desk_model(1).unwrap(), m);
        assert_eq!(desk_calibration(0).unwrap().len(), 8);
    }
}
