//! Uniform scalar quantization with norm-proportional bin widths.
//!
//! Every layer ℓ is quantized on the lattice `Δ_ℓ · Z` with
//! `Δ_ℓ(k) = ‖w_ℓ‖ · (1/k + ε₀ · √(24/n_ℓ))`. Because the width depends on
//! the weights only through their norm, it does not change when the weight
//! vector is rotated.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::norm;
use crate::model::{LayerSpec, Model};

/// Global ε₀ used when nothing else is configured.
pub const DEFAULT_EPS0: f64 = 0.01;

/// How the additive ε₀ floor of each layer is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum Eps0Policy {
    /// The same ε₀ for every layer.
    Constant(f64),
    /// Per-layer ε₀ such that k → ∞ yields the `R`-bit range step.
    PerLayerRbit(u32),
    /// Per-layer Freedman–Diaconis ε₀ = 2·IQR/∛n.
    PerLayerFd,
}

impl Default for Eps0Policy {
    fn default() -> Self {
        Eps0Policy::Constant(DEFAULT_EPS0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    /// The single parameter shared by all layers. May be `+inf`.
    pub k: f64,
    pub eps0: Eps0Policy,
}

impl QuantConfig {
    pub fn new(k: f64, eps0: f64) -> Self {
        QuantConfig {
            k,
            eps0: Eps0Policy::Constant(eps0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_nan() || self.k <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "k must be positive, got {}",
                self.k
            )));
        }
        match self.eps0 {
            Eps0Policy::Constant(e) if !(0.0..1.0).contains(&e) => Err(Error::InvalidConfig(
                format!("eps0 must lie in [0, 1), got {e}"),
            )),
            Eps0Policy::PerLayerRbit(0) => {
                Err(Error::InvalidConfig("R-bit policy needs R >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// ε₀ for one layer under this policy.
    pub fn eps0_for<T: Copy + Into<f64>>(&self, w: &[T]) -> Result<f64> {
        match self.eps0 {
            Eps0Policy::Constant(e) => Ok(e),
            Eps0Policy::PerLayerRbit(bits) => eps0_rbit(w, bits),
            Eps0Policy::PerLayerFd => eps0_fd(w),
        }
    }
}

/// Integer symbols on a uniform lattice of width `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLayer {
    pub delta: f64,
    pub symbols: Vec<i64>,
    pub min_symbol: i64,
    pub max_symbol: i64,
    /// Layer had zero norm; symbols are all zero and `delta` is a 1.0 sentinel.
    pub zero_norm: bool,
}

impl QuantizedLayer {
    pub(crate) fn from_symbols(delta: f64, symbols: Vec<i64>, zero_norm: bool) -> Self {
        let min_symbol = symbols.iter().copied().min().unwrap_or(0);
        let max_symbol = symbols.iter().copied().max().unwrap_or(0);
        QuantizedLayer {
            delta,
            symbols,
            min_symbol,
            max_symbol,
            zero_norm,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// ŵ = symbols · Δ in f64.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.symbols
            .iter()
            .map(|&s| s as f64 * self.delta)
            .collect()
    }

    /// ŵ stored in the nominal f32 representation. Every consumer (search,
    /// archive decode, CLI) goes through this one conversion.
    pub fn reconstruct_f32(&self) -> Vec<f32> {
        self.symbols
            .iter()
            .map(|&s| (s as f64 * self.delta) as f32)
            .collect()
    }
}

/// ŵ = round(w/Δ)·Δ with ties to even.
pub fn quantize_uniform<T: Copy + Into<f64>>(w: &[T], delta: f64) -> Result<QuantizedLayer> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::NonPositiveDelta(delta));
    }
    // beyond this the f64 quotient no longer resolves unit steps anyway
    const LIMIT: f64 = (1u64 << 53) as f64;
    let symbols = w
        .iter()
        .map(|&v| {
            let q = (v.into() / delta).round_ties_even();
            if q.abs() < LIMIT {
                Ok(q as i64)
            } else {
                Err(Error::SymbolOverflow)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedLayer::from_symbols(delta, symbols, false))
}

/// Δ = ‖w‖ · (1/k + ε₀·√(24/n)).
pub fn delta_for_layer<T: Copy + Into<f64>>(w: &[T], config: &QuantConfig) -> Result<f64> {
    config.validate()?;
    let n = w.len();
    let nrm = norm(w);
    if n == 0 || nrm == 0.0 {
        return Err(Error::ZeroNormLayer);
    }
    let eps0 = config.eps0_for(w)?;
    let delta = nrm * (1.0 / config.k + eps0 * (24.0 / n as f64).sqrt());
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::NonPositiveDelta(delta));
    }
    Ok(delta)
}

/// Bin width that yields cosine distortion ε on a layer of the given norm and
/// size: Δ = √ε · ‖w‖ · √(24/n).
pub fn delta_from_distortion(eps: f64, norm: f64, n: usize) -> f64 {
    eps.sqrt() * norm * (24.0 / n as f64).sqrt()
}

/// Inverse of [`delta_from_distortion`]: ε = n·Δ² / (24·‖w‖²).
pub fn distortion_from_delta(delta: f64, norm: f64, n: usize) -> f64 {
    n as f64 * delta * delta / (24.0 * norm * norm)
}

/// Bin width for a relative error ε′ = ‖w − ŵ‖/‖w‖: Δ = ε′·‖w‖·√(12/n).
pub fn delta_from_sqnr(eps_rel: f64, norm: f64, n: usize) -> f64 {
    eps_rel * norm * (12.0 / n as f64).sqrt()
}

fn min_max<T: Copy + Into<f64>>(w: &[T]) -> Option<(f64, f64)> {
    let mut it = w.iter().map(|&v| v.into());
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
}

/// (max(w) − min(w)) / (2^R − 1), the conventional range-based step.
pub fn range_step<T: Copy + Into<f64>>(w: &[T], bits: u32) -> Result<f64> {
    if bits == 0 {
        return Err(Error::InvalidConfig("R must be at least 1".into()));
    }
    let (lo, hi) = min_max(w).ok_or(Error::EmptyInput)?;
    if hi <= lo {
        return Err(Error::DegenerateRange);
    }
    Ok((hi - lo) / ((2f64).powi(bits as i32) - 1.0))
}

/// ε₀ that makes the k → ∞ bin width equal the R-bit range step.
pub fn eps0_rbit<T: Copy + Into<f64>>(w: &[T], bits: u32) -> Result<f64> {
    let step = range_step(w, bits)?;
    let n = w.len() as f64;
    let nrm = norm(w);
    Ok(step / (24.0 * nrm * nrm / n).sqrt())
}

/// Quantile with linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn interquartile_range<T: Copy + Into<f64>>(w: &[T]) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted: Vec<f64> = w.iter().map(|&v| v.into()).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25))
}

/// Freedman–Diaconis ε₀ = 2·IQR(w)/∛n.
pub fn eps0_fd<T: Copy + Into<f64>>(w: &[T]) -> Result<f64> {
    if w.len() < 4 {
        return Err(Error::TooFewSamples {
            needed: 4,
            got: w.len(),
        });
    }
    Ok(2.0 * interquartile_range(w)? / (w.len() as f64).cbrt())
}

/// R_ℓ = log₂((max − min)/Δ) bits/symbol; not rounded.
pub fn layer_rate<T: Copy + Into<f64>>(w: &[T], delta: f64) -> Result<f64> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::NonPositiveDelta(delta));
    }
    let (lo, hi) = min_max(w).ok_or(Error::EmptyInput)?;
    if hi <= lo {
        return Err(Error::DegenerateRange);
    }
    Ok(((hi - lo) / delta).log2())
}

/// Sorted (symbol, count) pairs.
pub fn histogram(symbols: &[i64]) -> Vec<(i64, u64)> {
    let mut counts: HashMap<i64, u64> = HashMap::new();
    for &s in symbols {
        *counts.entry(s).or_default() += 1;
    }
    let mut hist: Vec<_> = counts.into_iter().collect();
    hist.sort_unstable();
    hist
}

/// Shannon entropy of the symbol histogram in bits/symbol.
pub fn empirical_entropy(symbols: &[i64]) -> Result<f64> {
    if symbols.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = symbols.len() as f64;
    let h = histogram(symbols)
        .iter()
        .map(|&(_, c)| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// All layers of a model quantized under one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedModel {
    pub layers: Vec<QuantizedLayer>,
    pub config: QuantConfig,
    pub specs: Vec<LayerSpec>,
    /// Carried through unquantized.
    pub biases: Vec<Vec<f32>>,
}

impl QuantizedModel {
    pub fn deltas(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.delta).collect()
    }

    pub fn total_weights(&self) -> usize {
        self.layers.iter().map(QuantizedLayer::len).sum()
    }

    /// Σ n_ℓ·H_ℓ / Σ n_ℓ
    pub fn mean_entropy(&self) -> Result<f64> {
        let mut bits = 0.0;
        for l in &self.layers {
            bits += l.len() as f64 * empirical_entropy(&l.symbols)?;
        }
        Ok(bits / self.total_weights() as f64)
    }

    /// The reconstructed model with f32 weights.
    pub fn to_model(&self) -> Result<Model> {
        Model::new(
            self.specs.clone(),
            self.layers
                .iter()
                .map(QuantizedLayer::reconstruct_f32)
                .collect(),
            self.biases.clone(),
        )
    }
}

fn quantize_layer(w: &[f32], config: &QuantConfig) -> Result<QuantizedLayer> {
    if norm(w) == 0.0 {
        return Ok(QuantizedLayer::from_symbols(1.0, vec![0; w.len()], true));
    }
    let delta = delta_for_layer(w, config)?;
    quantize_uniform(w, delta)
}

/// Quantize every layer with its own Δ_ℓ(k).
pub fn quantize_model(model: &Model, config: &QuantConfig) -> Result<QuantizedModel> {
    config.validate()?;
    quantize_with(model, *config, |_, w| quantize_layer(w, config))
}

/// Quantize every layer with a caller-chosen bin width.
pub(crate) fn quantize_with<F>(
    model: &Model,
    config: QuantConfig,
    per_layer: F,
) -> Result<QuantizedModel>
where
    F: Fn(usize, &[f32]) -> Result<QuantizedLayer> + Sync,
{
    model.validate()?;
    let layers = model
        .weights
        .par_iter()
        .enumerate()
        .map(|(i, w)| per_layer(i, w).map_err(|e| e.in_layer(&model.layers[i].name)))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedModel {
        layers,
        config,
        specs: model.layers.clone(),
        biases: model.biases.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synth_model, Activation, Init};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn quantize_zero_vector() {
        let q = quantize_uniform(&[0.0f64; 3], 0.5).unwrap();
        assert_eq!(q.symbols, vec![0, 0, 0]);
        assert_eq!(q.reconstruct(), vec![0.0; 3]);
    }

    #[test]
    fn quantize_by_hand() {
        let q = quantize_uniform(&[0.24f64, -0.51, 1.0], 0.5).unwrap();
        assert_eq!(q.symbols, vec![0, -1, 2]);
        assert_eq!(q.reconstruct(), vec![0.0, -0.5, 1.0]);
        assert_eq!((q.min_symbol, q.max_symbol), (-1, 2));
    }

    #[test]
    fn lattice_points_are_fixed() {
        let w = [-1.5f64, 0.75, 3.0, 0.0];
        let q = quantize_uniform(&w, 0.25).unwrap();
        assert_eq!(q.reconstruct(), w.to_vec());
    }

    #[test]
    fn ties_round_to_even() {
        let q = quantize_uniform(&[0.5f64, 1.5, 2.5, -0.5, -1.5], 1.0).unwrap();
        assert_eq!(q.symbols, vec![0, 2, 2, 0, -2]);
    }

    #[test]
    fn non_positive_delta() {
        assert!(matches!(
            quantize_uniform(&[1.0f64], 0.0),
            Err(Error::NonPositiveDelta(_))
        ));
        assert!(matches!(
            quantize_uniform(&[1.0f64], -1.0),
            Err(Error::NonPositiveDelta(_))
        ));
    }

    #[test]
    fn delta_for_layer_examples() {
        let d = delta_for_layer(&[3.0f64, 4.0], &QuantConfig::new(10.0, 0.0)).unwrap();
        assert!(close(d, 0.5, 1e-15));

        // n = 24, ‖w‖ = 1: Δ = 1/100 + 0.01·1
        let w = vec![1.0 / 24f64.sqrt(); 24];
        let d = delta_for_layer(&w, &QuantConfig::new(100.0, 0.01)).unwrap();
        assert!(close(d, 0.02, 1e-12));

        let w = [0.6f64, -0.8, 0.0, 0.0];
        let limit = delta_for_layer(&w, &QuantConfig::new(f64::INFINITY, 0.05)).unwrap();
        assert!(close(limit, 0.05 * (24.0f64 / 4.0).sqrt(), 1e-15));
        let large = delta_for_layer(&w, &QuantConfig::new(1e12, 0.05)).unwrap();
        assert!(close(large, limit, 1e-11));
    }

    #[test]
    fn infinite_k_without_floor_is_rejected() {
        let err =
            delta_for_layer(&[1.0f64, 2.0], &QuantConfig::new(f64::INFINITY, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NonPositiveDelta(_)));
    }

    #[test]
    fn config_validation() {
        assert!(QuantConfig::new(0.0, 0.01).validate().is_err());
        assert!(QuantConfig::new(f64::NAN, 0.01).validate().is_err());
        assert!(QuantConfig::new(5.0, 1.0).validate().is_err());
        assert!(QuantConfig::new(5.0, -0.1).validate().is_err());
        assert!(QuantConfig::new(5.0, 0.0).validate().is_ok());
    }

    #[test]
    fn distortion_delta_relations() {
        assert!(close(delta_from_distortion(1.0, 1.0, 24), 1.0, 1e-15));
        for &(eps, nrm, n) in &[(0.3, 2.0, 100), (1e-5, 17.0, 4096), (0.9, 0.01, 7)] {
            let d = delta_from_distortion(eps, nrm, n);
            assert!(close(
                distortion_from_delta(d, nrm, n),
                eps,
                1e-12 * eps.max(1.0)
            ));
        }
        // ε = n/(24k²) gives Δ = ‖w‖/k
        let (n, k, nrm) = (300usize, 37.0f64, 4.5f64);
        let d = delta_from_distortion(n as f64 / (24.0 * k * k), nrm, n);
        assert!(close(d, nrm / k, 1e-12));
    }

    #[test]
    fn sqnr_relation() {
        assert!(close(delta_from_sqnr(1.0, 1.0, 12), 1.0, 1e-15));
        assert!(close(
            delta_from_sqnr(0.2, 3.0, 50),
            2.0 * delta_from_sqnr(0.1, 3.0, 50),
            1e-15
        ));
    }

    #[test]
    fn sqnr_matches_measured_relative_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w: Vec<f64> = (0..100_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target = 0.01;
        let d = delta_from_sqnr(target, norm(&w), w.len());
        let q = quantize_uniform(&w, d).unwrap().reconstruct();
        let err: Vec<f64> = w.iter().zip(&q).map(|(a, b)| a - b).collect();
        let measured = norm(&err) / norm(&w);
        assert!((measured - target).abs() <= 0.05 * target, "{measured}");
    }

    #[test]
    fn rbit_floor_reproduces_range_step() {
        let mut w: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
        w.swap(3, 700);
        let eps0 = eps0_rbit(&w, 8).unwrap();
        let config = QuantConfig {
            k: f64::INFINITY,
            eps0: Eps0Policy::PerLayerRbit(8),
        };
        let d = delta_for_layer(&w, &config).unwrap();
        assert!(close(d, 2.0 / 255.0, 1e-12));
        let d_const = delta_for_layer(&w, &QuantConfig::new(f64::INFINITY, eps0)).unwrap();
        assert!(close(d_const, d, 1e-15));

        let one = delta_for_layer(
            &w,
            &QuantConfig {
                k: f64::INFINITY,
                eps0: Eps0Policy::PerLayerRbit(1),
            },
        )
        .unwrap();
        assert!(close(one, 2.0, 1e-12));
        assert!(matches!(
            eps0_rbit(&[0.5f64; 4], 8),
            Err(Error::DegenerateRange)
        ));
    }

    #[test]
    fn freedman_diaconis() {
        assert!(close(
            interquartile_range(&[1.0f64, 2.0, 3.0, 4.0]).unwrap(),
            1.5,
            1e-15
        ));
        let e = eps0_fd(&[1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert!(close(e, 3.0 / 4f64.cbrt(), 1e-12));
        assert!(close(e, 1.8899, 1e-4));
        assert_eq!(eps0_fd(&[0.7f64; 9]).unwrap(), 0.0);
        let w = [0.3f64, -1.0, 2.5, 0.1, 0.9, -0.4];
        let scaled: Vec<f64> = w.iter().map(|v| v * 3.0).collect();
        assert!(close(
            eps0_fd(&scaled).unwrap(),
            3.0 * eps0_fd(&w).unwrap(),
            1e-12
        ));
        assert!(matches!(
            eps0_fd(&[1.0f64, 2.0]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn rate_examples() {
        let w = [0.0f64, 0.3, 1.0];
        assert!(close(layer_rate(&w, 0.25).unwrap(), 2.0, 1e-15));
        assert_eq!(layer_rate(&w, 1.0).unwrap(), 0.0);
        let r1 = layer_rate(&w, 0.1).unwrap();
        let r2 = layer_rate(&w, 0.05).unwrap();
        assert!(close(r2 - r1, 1.0, 1e-12));
        assert!(matches!(
            layer_rate(&[2.0f64, 2.0], 0.1),
            Err(Error::DegenerateRange)
        ));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(empirical_entropy(&[4, 4, 4]).unwrap(), 0.0);
        assert!(close(empirical_entropy(&[1, 2, 1, 2]).unwrap(), 1.0, 1e-15));
        let h = empirical_entropy(&[0, 0, 0, 1]).unwrap();
        let oracle = 0.75 * (4.0f64 / 3.0).log2() + 0.25 * 2.0;
        assert!(close(h, oracle, 1e-12));
        assert!(close(h, 0.8113, 1e-4));
        assert!(matches!(empirical_entropy(&[]), Err(Error::EmptyInput)));
    }

    fn two_layer(scale: f32) -> Model {
        let arch = vec![
            LayerSpec::dense("a", 4, 3, Activation::Relu),
            LayerSpec::dense("b", 3, 4, Activation::Identity).without_bias(),
        ];
        let mut m = synth_model(9, &arch, Init::Gaussian).unwrap();
        m.weights[1] = m.weights[0].iter().map(|v| v * scale).collect();
        m
    }

    #[test]
    fn delta_scales_with_layer_norm() {
        let m = two_layer(10.0);
        let q = quantize_model(&m, &QuantConfig::new(8.0, 0.0)).unwrap();
        let ratio = q.layers[1].delta / q.layers[0].delta;
        assert!(close(ratio, 10.0, 1e-5), "{ratio}");
        // same direction, so the symbols coincide
        assert_eq!(q.layers[0].symbols, q.layers[1].symbols);
    }

    #[test]
    fn quantize_model_is_deterministic_and_named_on_error() {
        let m = two_layer(2.0);
        let c = QuantConfig::new(5.0, 0.01);
        assert_eq!(
            quantize_model(&m, &c).unwrap(),
            quantize_model(&m, &c).unwrap()
        );

        let err = quantize_model(&m, &QuantConfig::new(f64::INFINITY, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Layer { ref name, .. } if name == "a"));
        assert!(matches!(err.root(), Error::NonPositiveDelta(_)));
        let finite = quantize_model(&m, &QuantConfig::new(f64::INFINITY, 0.05)).unwrap();
        assert!(finite
            .layers
            .iter()
            .all(|l| l.delta.is_finite() && l.delta > 0.0));
    }

    #[test]
    fn zero_norm_layer_gets_sentinel() {
        let mut m = two_layer(1.0);
        m.weights[1] = vec![0.0; 12];
        let q = quantize_model(&m, &QuantConfig::new(5.0, 0.01)).unwrap();
        assert!(q.layers[1].zero_norm);
        assert_eq!(q.layers[1].delta, 1.0);
        assert!(q.layers[1].symbols.iter().all(|&s| s == 0));
        assert!(!q.layers[0].zero_norm);
        assert_eq!(q.to_model().unwrap().weights[1], vec![0.0; 12]);
    }

    mod laws {
        use super::*;

        fn uniform_source(n: usize, seed: u64) -> Vec<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        }

        #[test]
        fn mse_is_delta_squared_over_twelve() {
            let w = uniform_source(200_000, 1);
            let d = 0.01;
            let q = quantize_uniform(&w, d).unwrap().reconstruct();
            let mse = w.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / w.len() as f64;
            assert!((mse / (d * d / 12.0) - 1.0).abs() < 0.05, "{mse}");
        }

        #[test]
        fn halving_delta_adds_one_bit() {
            let w = uniform_source(200_000, 2);
            let h1 = empirical_entropy(&quantize_uniform(&w, 0.01).unwrap().symbols).unwrap();
            let h2 = empirical_entropy(&quantize_uniform(&w, 0.005).unwrap().symbols).unwrap();
            assert!((h2 - h1 - 1.0).abs() < 0.05, "{h1} {h2}");
        }

        #[test]
        fn distortion_matches_bin_width() {
            let arch = vec![LayerSpec::dense("a", 400, 300, Activation::Identity)];
            let m = synth_model(4, &arch, Init::Gaussian).unwrap();
            let w = &m.weights[0];
            let d = 0.3 * (1.0 / 300f64).sqrt();
            let q = quantize_uniform(w, d).unwrap().reconstruct();
            let (eps, _) = crate::forward::layer_distortion(w, &q).unwrap();
            let predicted = distortion_from_delta(d, norm(w), w.len());
            assert!((eps / predicted - 1.0).abs() < 0.1, "{eps} vs {predicted}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reconstruction_error_at_most_half_bin(
                w in prop::collection::vec(-100.0f64..100.0, 1..200),
                delta in 1e-3f64..10.0,
            ) {
                let q = quantize_uniform(&w, delta).unwrap();
                for (a, b) in w.iter().zip(q.reconstruct()) {
                    prop_assert!((a - b).abs() <= delta / 2.0 * (1.0 + 1e-12));
                }
                let support = histogram(&q.symbols).len() as i64;
                prop_assert!(support <= q.max_symbol - q.min_symbol + 1);
            }

            #[test]
            fn entropy_is_bounded_by_support(s in prop::collection::vec(-20i64..20, 1..500)) {
                let h = empirical_entropy(&s).unwrap();
                let support = histogram(&s).len() as f64;
                prop_assert!(h >= 0.0 && h <= support.log2() + 1e-12);
            }
        }
    }
}
