#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riq::model::{synth_model, Activation, Init, LayerSpec, Model};

/// i.i.d. uniform weights on [-1, 1).
pub fn uniform_source(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A random dense stack (1 to 4 layers, random widths, optional biases and
/// constant layers) and a k inside its admissible interval.
pub fn random_archive_model(seed: u64) -> (Model, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=4);
    let mut width = rng.random_range(1..=48);
    let mut arch = Vec::new();
    for i in 0..depth {
        let out = rng.random_range(1..=48);
        let act = if i + 1 == depth {
            Activation::Identity
        } else {
            Activation::Relu
        };
        let mut spec = LayerSpec::dense(format!("layer{i}"), out, width, act);
        if rng.random_bool(0.3) {
            spec = spec.without_bias();
        }
        arch.push(spec);
        width = out;
    }
    let init = if rng.random_bool(0.5) {
        Init::Gaussian
    } else {
        Init::Uniform
    };
    let mut m = synth_model(seed, &arch, init).unwrap();
    for b in &mut m.biases {
        for v in b.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    if depth > 1 && rng.random_bool(0.3) {
        let i = rng.random_range(0..depth);
        let c = if rng.random_bool(0.5) { 0.0 } else { 0.75 };
        m.weights[i].fill(c);
    }
    let n_star = m.largest_layer() as f64;
    let k = (n_star / 24.0).sqrt() * rng.random_range(1.1..200.0);
    (m, k)
}
