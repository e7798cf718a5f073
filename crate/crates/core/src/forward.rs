//! Deterministic forward pass and cosine deviation between two models.
//!
//! Storage is `f32`; every accumulation runs in `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, LayerKind, LayerSpec, Model};

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }
}

fn activate(activation: Activation, v: &mut [f64]) {
    if activation == Activation::Relu {
        for x in v {
            *x = x.max(0.0);
        }
    }
}

fn dense(spec: &LayerSpec, w: &[f32], b: &[f32], x: &Tensor) -> Result<Tensor> {
    let (out, inp) = (spec.shape[0], spec.shape[1]);
    if x.data.len() != inp {
        return Err(Error::ShapeMismatch(format!(
            "layer {} expects {inp} inputs, got {:?}",
            spec.name, x.shape
        )));
    }
    let mut y: Vec<f64> = w
        .chunks_exact(inp)
        .map(|row| row.iter().zip(&x.data).map(|(&a, &b)| a as f64 * b).sum())
        .collect();
    for (yi, &bi) in y.iter_mut().zip(b) {
        *yi += bi as f64;
    }
    activate(spec.activation, &mut y);
    Ok(Tensor {
        shape: vec![out],
        data: y,
    })
}

/// Valid cross-correlation, stride 1. Inputs are `[c, h, w]` or `[h, w]`.
fn conv2d(spec: &LayerSpec, w: &[f32], b: &[f32], x: &Tensor) -> Result<Tensor> {
    let (oc, ic, kh, kw) = (spec.shape[0], spec.shape[1], spec.shape[2], spec.shape[3]);
    let (c, h, wd) = match x.shape.as_slice() {
        &[c, h, w] => (c, h, w),
        &[h, w] => (1, h, w),
        other => {
            return Err(Error::ShapeMismatch(format!(
                "layer {} expects a [c, h, w] input, got {other:?}",
                spec.name
            )))
        }
    };
    if c != ic || h < kh || wd < kw {
        return Err(Error::ShapeMismatch(format!(
            "layer {} with kernel {:?} cannot consume input {:?}",
            spec.name, spec.shape, x.shape
        )));
    }
    let (oh, ow) = (h - kh + 1, wd - kw + 1);
    let mut y = vec![0.0; oc * oh * ow];
    for o in 0..oc {
        let bias = b.get(o).map_or(0.0, |&v| v as f64);
        for r in 0..oh {
            for s in 0..ow {
                let mut acc = bias;
                for ch in 0..ic {
                    for i in 0..kh {
                        let krow = &w[((o * ic + ch) * kh + i) * kw..][..kw];
                        let xrow = &x.data[(ch * h + r + i) * wd + s..][..kw];
                        acc += krow
                            .iter()
                            .zip(xrow)
                            .map(|(&k, &v)| k as f64 * v)
                            .sum::<f64>();
                    }
                }
                y[(o * oh + r) * ow + s] = acc;
            }
        }
    }
    activate(spec.activation, &mut y);
    Ok(Tensor {
        shape: vec![oc, oh, ow],
        data: y,
    })
}

/// f(x), flattened.
pub fn forward(model: &Model, x: &Tensor) -> Result<Vec<f64>> {
    let mut h = x.clone();
    for (i, spec) in model.layers.iter().enumerate() {
        let (w, b) = (&model.weights[i], &model.biases[i]);
        h = match spec.kind {
            LayerKind::Dense => dense(spec, w, b, &h)?,
            LayerKind::Conv2d => conv2d(spec, w, b, &h)?,
        };
    }
    Ok(h.data)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    v.iter().map(|&x| x.into() * x.into()).sum::<f64>().sqrt()
}

fn cosine_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(1.0 - dot(a, b) / (na * nb))
}

/// Cosine distance ε between a weight vector and its reconstruction, and the
/// angle θ = arccos(1 − ε).
pub fn layer_distortion<A, B>(w: &[A], w_hat: &[B]) -> Result<(f64, f64)>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if w.len() != w_hat.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} elements",
            w.len(),
            w_hat.len()
        )));
    }
    let (nw, nq) = (norm(w), norm(w_hat));
    if nw == 0.0 || nq == 0.0 {
        return Err(Error::ZeroVector);
    }
    let inner: f64 = w
        .iter()
        .zip(w_hat)
        .map(|(&a, &b)| a.into() * b.into())
        .sum();
    let eps = 1.0 - inner / (nw * nq);
    let theta = (1.0 - eps).clamp(-1.0, 1.0).acos();
    Ok((eps, theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationSource {
    File,
    Gaussian { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSet {
    pub samples: Vec<Tensor>,
    pub source: CalibrationSource,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationSidecar {
    count: usize,
    shape: Vec<usize>,
}

impl CalibrationSet {
    pub fn new(samples: Vec<Tensor>, source: CalibrationSource) -> Result<Self> {
        let set = CalibrationSet { samples, source };
        set.validate()?;
        Ok(set)
    }

    /// `count` i.i.d. standard normal inputs of the given shape, rounded to
    /// f32 so the set survives a calibration file unchanged.
    pub fn gaussian(seed: u64, count: usize, shape: &[usize]) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // separate stream from synth_model so equal seeds stay uncorrelated
        rng.set_stream(1);
        let len: usize = shape.iter().product();
        let samples = (0..count)
            .map(|_| Tensor {
                shape: shape.to_vec(),
                data: (0..len)
                    .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng) as f32 as f64)
                    .collect(),
            })
            .collect();
        CalibrationSet::new(samples, CalibrationSource::Gaussian { seed })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::InvalidCalibration("calibration set is empty".into()))?;
        for (i, s) in self.samples.iter().enumerate() {
            if s.shape != first.shape || s.data.len() != s.shape.iter().product::<usize>() {
                return Err(Error::InvalidCalibration(format!(
                    "sample {i} has shape {:?}, expected {:?}",
                    s.shape, first.shape
                )));
            }
            if s.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidCalibration(format!(
                    "sample {i} has non-finite values"
                )));
            }
        }
        Ok(())
    }
}

/// JSON sidecar that sits next to a calibration blob (`C.bin` -> `C.json`).
pub fn calibration_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_calibration(calib: &CalibrationSet, path: impl AsRef<Path>) -> Result<()> {
    calib.validate()?;
    let path = path.as_ref();
    let sidecar = CalibrationSidecar {
        count: calib.len(),
        shape: calib.samples[0].shape.clone(),
    };
    let mut blob = Vec::new();
    for s in &calib.samples {
        for &v in &s.data {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, blob)?;
    fs::write(
        calibration_sidecar_path(path),
        serde_json::to_string(&sidecar)?,
    )?;
    Ok(())
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<CalibrationSet> {
    let path = path.as_ref();
    let sidecar_path = calibration_sidecar_path(path);
    for p in [path, sidecar_path.as_path()] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.to_path_buf()));
        }
    }
    let sidecar: CalibrationSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;
    let blob = fs::read(path)?;
    let len: usize = sidecar.shape.iter().product();
    if blob.len() != 4 * len * sidecar.count {
        return Err(Error::ManifestMismatch(format!(
            "sidecar declares {} bytes, calibration blob holds {}",
            4 * len * sidecar.count,
            blob.len()
        )));
    }
    let values: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let samples = if len == 0 {
        Vec::new()
    } else {
        values
            .chunks_exact(len)
            .map(|d| Tensor {
                shape: sidecar.shape.clone(),
                data: d.to_vec(),
            })
            .collect()
    };
    CalibrationSet::new(samples, CalibrationSource::File)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationReport {
    pub per_sample: Vec<f64>,
    /// The value compared against the deviation budget.
    pub mean_deviation: f64,
    pub max_deviation: f64,
    pub per_layer_distortion: Vec<f64>,
    pub per_layer_angle: Vec<f64>,
}

/// Reference outputs f(x_i) computed once and reused across many candidate
/// models, as the search does.
#[derive(Clone, Debug)]
pub struct ReferenceOutputs {
    outputs: Vec<Vec<f64>>,
    samples: Vec<Tensor>,
}

impl ReferenceOutputs {
    pub fn new(model: &Model, calib: &CalibrationSet) -> Result<Self> {
        calib.validate()?;
        let outputs = calib
            .samples
            .par_iter()
            .map(|x| forward(model, x))
            .collect::<Result<Vec<_>>>()?;
        if let Some(sample) = outputs.iter().position(|y| norm(y) == 0.0) {
            return Err(Error::ZeroOutputNorm { sample });
        }
        Ok(ReferenceOutputs {
            outputs,
            samples: calib.samples.clone(),
        })
    }

    /// Per-sample cosine distances between the reference and `candidate`.
    pub fn per_sample(&self, candidate: &Model) -> Result<Vec<f64>> {
        // collected in index order so the mean is bit-stable under rayon
        self.samples
            .par_iter()
            .zip(&self.outputs)
            .map(|(x, reference)| {
                let y = forward(candidate, x)?;
                if y.len() != reference.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "output length {} vs {}",
                        y.len(),
                        reference.len()
                    )));
                }
                // a silenced candidate carries no direction; score it as orthogonal
                Ok(cosine_distance(reference, &y).unwrap_or(1.0))
            })
            .collect()
    }

    pub fn mean_deviation(&self, candidate: &Model) -> Result<f64> {
        let per_sample = self.per_sample(candidate)?;
        Ok(mean(&per_sample))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_same_architecture(a: &Model, b: &Model) -> Result<()> {
    if a.layers != b.layers {
        return Err(Error::ShapeMismatch(
            "models do not share an architecture".into(),
        ));
    }
    Ok(())
}

/// Output deviation of `qmodel` against `model` over the calibration set.
pub fn cosine_deviation(
    model: &Model,
    qmodel: &Model,
    calib: &CalibrationSet,
) -> Result<DeviationReport> {
    check_same_architecture(model, qmodel)?;
    let per_sample = ReferenceOutputs::new(model, calib)?.per_sample(qmodel)?;
    let mean_deviation = mean(&per_sample);
    let max_deviation = per_sample.iter().copied().fold(f64::MIN, f64::max);
    let (per_layer_distortion, per_layer_angle) = model
        .weights
        .iter()
        .zip(&qmodel.weights)
        .map(|(w, q)| distortion_or_degenerate(w, q))
        .unzip();
    Ok(DeviationReport {
        per_sample,
        mean_deviation,
        max_deviation,
        per_layer_distortion,
        per_layer_angle,
    })
}

/// [`layer_distortion`] extended to zero vectors: a zero layer reproduced as
/// zero is undistorted, a layer collapsed to zero is orthogonal.
pub(crate) fn distortion_or_degenerate(w: &[f32], w_hat: &[f32]) -> (f64, f64) {
    match layer_distortion(w, w_hat) {
        Ok(pair) => pair,
        Err(_) if norm(w) == 0.0 && norm(w_hat) == 0.0 => (0.0, 0.0),
        Err(_) => (1.0, std::f64::consts::FRAC_PI_2),
    }
}
