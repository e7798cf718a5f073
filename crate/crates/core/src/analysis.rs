//! Rate-distortion sweeps over k, the inverse-square deviation fit, the
//! per-layer angle composition check, and the range-based baseline.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::archive::{compress, compression_ratio, estimated_ratio};
use crate::error::{Error, Result};
use crate::forward::{distortion_or_degenerate, norm, CalibrationSet, ReferenceOutputs};
use crate::model::Model;
use crate::quant::{
    empirical_entropy, layer_rate, quantize_model, quantize_uniform, quantize_with, range_step,
    Eps0Policy, QuantConfig, QuantizedLayer, QuantizedModel,
};
use crate::search::{riq_search, SearchBounds, SearchParams};

pub const DEFAULT_GRID_POINTS: usize = 16;
pub const MAX_ROTATION_DIM: usize = 512;
/// Largest per-layer distortion for which the angle composition is expected
/// to hold.
pub const HIGH_RATE_DISTORTION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerPoint {
    pub name: String,
    pub n: usize,
    pub norm: f64,
    pub delta: f64,
    pub eps: f64,
    /// log₂(range/Δ); `None` for constant layers.
    pub rate: Option<f64>,
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub k: f64,
    pub mean_deviation: f64,
    pub max_deviation: f64,
    pub mean_entropy: f64,
    pub est_ratio: Option<f64>,
    pub actual_ratio: Option<f64>,
    pub layers: Vec<LayerPoint>,
}

/// `n` values spaced evenly in log k between `lo` and `hi`, both included.
pub fn log_spaced_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(Error::InvalidGrid(format!(
            "cannot space {n} points over [{lo}, {hi}]"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = lo;
    grid[n - 1] = hi;
    Ok(grid)
}

/// The log-upper half of the search interval, `[√(k_min·k_max), k_max]`.
pub fn high_rate_half(bounds: &SearchBounds) -> (f64, f64) {
    ((bounds.k_min * bounds.k_max).sqrt(), bounds.k_max)
}

fn check_grid(grid: &[f64], bounds: &SearchBounds) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    if let Some(w) = grid.windows(2).find(|w| w[0] >= w[1] || w[1].is_nan()) {
        return Err(Error::InvalidGrid(format!(
            "grid not strictly ascending at {} → {}",
            w[0], w[1]
        )));
    }
    if let Some(k) = grid.iter().find(|&&k| !bounds.contains(k)) {
        return Err(Error::InvalidGrid(format!(
            "k = {k} outside [{}, {}]",
            bounds.k_min, bounds.k_max
        )));
    }
    Ok(())
}

/// Size ratios, or `None` when an alphabet is too large for the coder.
fn ratios(qmodel: &QuantizedModel) -> Result<(Option<f64>, Option<f64>)> {
    let too_large = |e: &Error| matches!(e.root(), Error::AlphabetTooLarge { .. });
    let est = match estimated_ratio(qmodel) {
        Ok(r) => Some(r),
        Err(e) if too_large(&e) => None,
        Err(e) => return Err(e),
    };
    let actual = match compress(qmodel) {
        Ok(archive) => Some(compression_ratio(qmodel, &archive)?.actual),
        Err(e) if too_large(&e) => None,
        Err(e) => return Err(e),
    };
    Ok((est, actual))
}

fn layer_points(model: &Model, qmodel: &QuantizedModel) -> Result<Vec<LayerPoint>> {
    model
        .weights
        .iter()
        .zip(&qmodel.layers)
        .zip(&model.layers)
        .map(|((w, q), spec)| {
            let (eps, _) = distortion_or_degenerate(w, &q.reconstruct_f32());
            Ok(LayerPoint {
                name: spec.name.clone(),
                n: w.len(),
                norm: norm(w),
                delta: q.delta,
                eps,
                rate: layer_rate(w, q.delta).ok(),
                entropy: empirical_entropy(&q.symbols)?,
            })
        })
        .collect()
}

/// Quantize, measure and compress at every k of an ascending grid inside
/// `bounds`. `eps0` is the floor used for quantization, independent of the ε₀
/// that produced the bounds.
pub fn sweep(
    model: &Model,
    calib: &CalibrationSet,
    grid: &[f64],
    eps0: f64,
    bounds: &SearchBounds,
) -> Result<Vec<SweepPoint>> {
    check_grid(grid, bounds)?;
    let reference = ReferenceOutputs::new(model, calib)?;
    grid.par_iter()
        .map(|&k| {
            let qmodel = quantize_model(model, &QuantConfig::new(k, eps0))?;
            let per_sample = reference.per_sample(&qmodel.to_model()?)?;
            let (est_ratio, actual_ratio) = ratios(&qmodel)?;
            Ok(SweepPoint {
                k,
                mean_deviation: per_sample.iter().sum::<f64>() / per_sample.len() as f64,
                max_deviation: per_sample.iter().copied().fold(f64::MIN, f64::max),
                mean_entropy: qmodel.mean_entropy()?,
                est_ratio,
                actual_ratio,
                layers: layer_points(model, &qmodel)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitResult {
    /// Coefficient of y = a/k².
    pub a: f64,
    pub r_squared: f64,
    pub k_lo: f64,
    pub k_hi: f64,
}

/// Least squares of y against x = 1/k² through the origin.
pub fn fit_inverse_square(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need 3 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(k, y)| !(k > 0.0 && k.is_finite() && y.is_finite()))
    {
        return Err(Error::DegenerateFit(
            "non-finite or non-positive sample".into(),
        ));
    }
    let mut ks: Vec<f64> = points.iter().map(|p| p.0).collect();
    ks.sort_by(f64::total_cmp);
    if ks.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateFit("repeated k".into()));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(k, y)| (1.0 / (k * k), y)).collect();
    let sxx: f64 = xy.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = xy.iter().map(|(x, y)| x * y).sum();
    let a = sxy / sxx;
    let mean = xy.iter().map(|p| p.1).sum::<f64>() / xy.len() as f64;
    let ss_tot: f64 = xy.iter().map(|(_, y)| (y - mean).powi(2)).sum();
    let ss_y: f64 = xy.iter().map(|(_, y)| y * y).sum();
    if ss_tot <= 1e-24 * ss_y.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateFit("deviation has no variance".into()));
    }
    let ss_res: f64 = xy.iter().map(|(x, y)| (y - a * x).powi(2)).sum();
    Ok(FitResult {
        a,
        r_squared: (1.0 - ss_res / ss_tot).clamp(0.0, 1.0),
        k_lo: ks[0],
        k_hi: ks[ks.len() - 1],
    })
}

/// Whole-model cosine against the norm-weighted mix of per-layer cosines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AngleComposition {
    /// cos θ between the concatenated weight vectors.
    pub whole: f64,
    /// Σ (‖w_ℓ‖²/‖w‖²)·cos θ_ℓ
    pub combined: f64,
    pub residual: f64,
    pub max_distortion: f64,
    /// Every layer distortion is at most [`HIGH_RATE_DISTORTION`].
    pub in_regime: bool,
}

/// Compare the rotation of the whole weight vector with the convex
/// combination of per-layer rotations. The identity is approximate and only
/// expected to hold when `in_regime` is set.
pub fn check_angle_composition(model: &Model, qmodel: &Model) -> Result<AngleComposition> {
    if model.layers != qmodel.layers {
        return Err(Error::ShapeMismatch(
            "models do not share an architecture".into(),
        ));
    }
    let total_sq: f64 = model.weights.iter().map(|w| norm(w).powi(2)).sum();
    if total_sq == 0.0 {
        return Err(Error::ZeroVector);
    }
    let (mut dot, mut q_sq, mut combined, mut max_distortion) = (0.0, 0.0, 0.0, 0.0f64);
    for (w, q) in model.weights.iter().zip(&qmodel.weights) {
        dot += w
            .iter()
            .zip(q)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum::<f64>();
        q_sq += norm(q).powi(2);
        let (eps, _) = distortion_or_degenerate(w, q);
        combined += norm(w).powi(2) / total_sq * (1.0 - eps);
        max_distortion = max_distortion.max(eps);
    }
    let whole = if q_sq == 0.0 {
        0.0
    } else {
        dot / (total_sq.sqrt() * q_sq.sqrt())
    };
    Ok(AngleComposition {
        whole,
        combined,
        residual: (whole - combined).abs(),
        max_distortion,
        in_regime: max_distortion <= HIGH_RATE_DISTORTION,
    })
}

/// The RIQ solution found at the deviation of a uniform point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiqMatch {
    pub k: f64,
    pub deviation: f64,
    pub mean_entropy: f64,
    pub est_ratio: Option<f64>,
    pub actual_ratio: Option<f64>,
    /// False when the search could not reach the uniform deviation and this
    /// is its best effort at `k_max`.
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformPoint {
    pub bits: u32,
    pub deviation: f64,
    pub mean_entropy: f64,
    pub est_ratio: Option<f64>,
    pub actual_ratio: Option<f64>,
    /// Constant layers, which have no range to divide.
    pub skipped_layers: Vec<String>,
    pub riq: Option<RiqMatch>,
}

/// Every layer quantized with the conventional step (max − min)/(2^R − 1).
///
/// Constant layers get Δ = |c| (or the zero-layer sentinel) and are listed in
/// the second return value.
pub fn quantize_range_based(model: &Model, bits: u32) -> Result<(QuantizedModel, Vec<String>)> {
    if bits == 0 {
        return Err(Error::InvalidConfig("R must be at least 1".into()));
    }
    let skipped = model
        .weights
        .iter()
        .zip(&model.layers)
        .filter(|(w, _)| matches!(range_step(w, bits), Err(Error::DegenerateRange)))
        .map(|(_, s)| s.name.clone())
        .collect();
    // k → ∞ under the R-bit ε₀ policy is exactly the range step
    let config = QuantConfig {
        k: f64::INFINITY,
        eps0: Eps0Policy::PerLayerRbit(bits),
    };
    let q = quantize_with(model, config, |_, w| match range_step(w, bits) {
        Ok(delta) => quantize_uniform(w, delta),
        Err(Error::DegenerateRange) if w[0] != 0.0 => quantize_uniform(w, (w[0] as f64).abs()),
        Err(Error::DegenerateRange) => {
            Ok(QuantizedLayer::from_symbols(1.0, vec![0; w.len()], true))
        }
        Err(e) => Err(e),
    })?;
    Ok((q, skipped))
}

/// Range-based quantization at each bit width, each paired with the RIQ
/// search run at the deviation the uniform quantizer produced.
pub fn compare_uniform(
    model: &Model,
    calib: &CalibrationSet,
    bit_grid: &[u32],
    params: &SearchParams,
) -> Result<Vec<UniformPoint>> {
    if bit_grid.is_empty() {
        return Err(Error::InvalidGrid("empty bit grid".into()));
    }
    let reference = ReferenceOutputs::new(model, calib)?;
    bit_grid
        .iter()
        .map(|&bits| {
            let (qmodel, skipped_layers) = quantize_range_based(model, bits)?;
            let deviation = reference.mean_deviation(&qmodel.to_model()?)?;
            let (est_ratio, actual_ratio) = ratios(&qmodel)?;
            let riq = if deviation > 0.0 && deviation <= 2.0 {
                let outcome = match riq_search(model, calib, deviation, params) {
                    Ok(o) => o,
                    Err(Error::Unsatisfiable(best)) => *best,
                    Err(e) => return Err(e),
                };
                let (est_ratio, actual_ratio) = ratios(&outcome.qmodel)?;
                Some(RiqMatch {
                    k: outcome.trace.chosen_k,
                    deviation: outcome.deviation,
                    mean_entropy: outcome.qmodel.mean_entropy()?,
                    est_ratio,
                    actual_ratio,
                    satisfied: outcome.satisfied,
                })
            } else {
                None
            };
            Ok(UniformPoint {
                bits,
                deviation,
                mean_entropy: qmodel.mean_entropy()?,
                est_ratio,
                actual_ratio,
                skipped_layers,
                riq,
            })
        })
        .collect()
}

/// A Haar-random orthogonal matrix: QR of a seeded Gaussian matrix with the
/// signs of R's diagonal folded into Q.
pub fn random_rotation(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n > MAX_ROTATION_DIM {
        return Err(Error::DimensionTooLarge(n));
    }
    if n == 0 {
        return Err(Error::InvalidConfig(
            "rotation dimension must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

pub fn rotate<T: Copy + Into<f64>>(u: &DMatrix<f64>, w: &[T]) -> Result<Vec<f64>> {
    if u.ncols() != w.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}×{} rotation for {} weights",
            u.nrows(),
            u.ncols(),
            w.len()
        )));
    }
    let v = nalgebra::DVector::from_iterator(w.len(), w.iter().map(|&x| x.into()));
    Ok((u * v).iter().copied().collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("k,deviation,mean_entropy,est_ratio,actual_ratio\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.k,
            p.mean_deviation,
            p.mean_entropy,
            opt(p.est_ratio),
            opt(p.actual_ratio)
        );
    }
    out
}

/// Per-layer rows for every sweep point, keyed by k.
pub fn layers_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("k,layer,n,norm,delta,eps,rate,entropy\n");
    for p in points {
        for l in &p.layers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                p.k,
                l.name,
                l.n,
                l.norm,
                l.delta,
                l.eps,
                opt(l.rate),
                l.entropy
            );
        }
    }
    out
}

pub fn fit_csv(fit: &FitResult) -> String {
    format!("a,r2\n{},{}\n", fit.a, fit.r_squared)
}

pub fn uniform_csv(points: &[UniformPoint]) -> String {
    let mut out = String::from(
        "bits,deviation,mean_entropy,est_ratio,actual_ratio,riq_k,riq_deviation,riq_mean_entropy,riq_actual_ratio,riq_satisfied,skipped\n",
    );
    for p in points {
        let riq = p.riq.as_ref();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.bits,
            p.deviation,
            p.mean_entropy,
            opt(p.est_ratio),
            opt(p.actual_ratio),
            opt(riq.map(|r| r.k)),
            opt(riq.map(|r| r.deviation)),
            opt(riq.map(|r| r.mean_entropy)),
            opt(riq.and_then(|r| r.actual_ratio)),
            riq.map(|r| r.satisfied.to_string()).unwrap_or_default(),
            p.skipped_layers.join(";")
        );
    }
    out
}
