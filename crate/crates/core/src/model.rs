//! Layered weight models and the `.riqm` container.
//!
//! A container is a directory holding `manifest.json` and `weights.bin`. The
//! blob stores, for every layer in manifest order, its weights (row-major over
//! the declared shape) followed by its biases, all as little-endian `f32`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// One affine layer. Dense shapes are `[out, in]`, conv2d shapes are
/// `[out_ch, in_ch, kh, kw]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub activation: Activation,
    pub shape: Vec<usize>,
    pub bias_count: usize,
}

impl LayerSpec {
    pub fn dense(name: impl Into<String>, out: usize, inp: usize, activation: Activation) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Dense,
            activation,
            shape: vec![out, inp],
            bias_count: out,
        }
    }

    pub fn conv2d(
        name: impl Into<String>,
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        activation: Activation,
    ) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Conv2d,
            activation,
            shape: vec![out_ch, in_ch, kh, kw],
            bias_count: out_ch,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias_count = 0;
        self
    }

    /// n_ℓ, the number of quantized weights.
    pub fn weight_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn out_features(&self) -> usize {
        self.shape[0]
    }

    pub fn fan_in(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let arity = match self.kind {
            LayerKind::Dense => 2,
            LayerKind::Conv2d => 4,
        };
        if self.shape.len() != arity {
            return Err(Error::InvalidModel(format!(
                "layer {}: {:?} expects a shape of arity {arity}, got {:?}",
                self.name, self.kind, self.shape
            )));
        }
        if self.shape.contains(&0) {
            return Err(Error::InvalidModel(format!(
                "layer {}: zero-sized dimension in {:?}",
                self.name, self.shape
            )));
        }
        if self.bias_count != 0 && self.bias_count != self.out_features() {
            return Err(Error::InvalidModel(format!(
                "layer {}: bias_count {} must be 0 or {}",
                self.name,
                self.bias_count,
                self.out_features()
            )));
        }
        Ok(())
    }
}

/// Ordered layers with their flat weight and bias vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub layers: Vec<LayerSpec>,
    pub weights: Vec<Vec<f32>>,
    pub biases: Vec<Vec<f32>>,
}

impl Model {
    pub fn new(
        layers: Vec<LayerSpec>,
        weights: Vec<Vec<f32>>,
        biases: Vec<Vec<f32>>,
    ) -> Result<Self> {
        let model = Model {
            layers,
            weights,
            biases,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Σ n_ℓ
    pub fn total_weights(&self) -> usize {
        self.layers.iter().map(LayerSpec::weight_count).sum()
    }

    /// n_ℓ* of the largest layer.
    pub fn largest_layer(&self) -> usize {
        self.layers
            .iter()
            .map(LayerSpec::weight_count)
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::EmptyArch);
        }
        validate_arch(&self.layers)?;
        if self.weights.len() != self.layers.len() || self.biases.len() != self.layers.len() {
            return Err(Error::InvalidModel(format!(
                "{} layers but {} weight and {} bias vectors",
                self.layers.len(),
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (i, spec) in self.layers.iter().enumerate() {
            if self.weights[i].len() != spec.weight_count() {
                return Err(Error::InvalidModel(format!(
                    "layer {}: {} weights, shape {:?} requires {}",
                    spec.name,
                    self.weights[i].len(),
                    spec.shape,
                    spec.weight_count()
                )));
            }
            if self.biases[i].len() != spec.bias_count {
                return Err(Error::InvalidModel(format!(
                    "layer {}: {} biases, bias_count is {}",
                    spec.name,
                    self.biases[i].len(),
                    spec.bias_count
                )));
            }
            let values = self.weights[i].iter().chain(self.biases[i].iter());
            if let Some(index) = values.into_iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteWeight {
                    layer: spec.name.clone(),
                    index,
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_arch(layers: &[LayerSpec]) -> Result<()> {
    let mut names = HashSet::new();
    for spec in layers {
        spec.validate()?;
        if !names.insert(spec.name.as_str()) {
            return Err(Error::InvalidModel(format!(
                "duplicate layer name {}",
                spec.name
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    layers: Vec<ManifestLayer>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLayer {
    #[serde(flatten)]
    spec: LayerSpec,
    /// Optional redundant n_ℓ; checked against the shape when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight_count: Option<usize>,
}

pub(crate) fn manifest_json(layers: &[LayerSpec]) -> Result<String> {
    let manifest = Manifest {
        version: CONTAINER_VERSION,
        layers: layers
            .iter()
            .map(|spec| ManifestLayer {
                spec: spec.clone(),
                weight_count: None,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&manifest)?)
}

pub(crate) fn parse_manifest(text: &str) -> Result<Vec<LayerSpec>> {
    let manifest: Manifest = serde_json::from_str(text)?;
    if manifest.version != CONTAINER_VERSION {
        return Err(Error::ManifestMismatch(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in manifest.layers {
        let spec = entry.spec;
        if let Some(n) = entry.weight_count {
            let declared = spec.shape.iter().product::<usize>();
            if n != declared {
                return Err(Error::ManifestMismatch(format!(
                    "layer {}: weight_count {n} != product of shape {:?}",
                    spec.name, spec.shape
                )));
            }
        }
        layers.push(spec);
    }
    if layers.is_empty() {
        return Err(Error::EmptyArch);
    }
    validate_arch(&layers)?;
    Ok(layers)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let dir = path.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let blob_path = dir.join(WEIGHTS_FILE);
    for p in [&manifest_path, &blob_path] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let layers = parse_manifest(&fs::read_to_string(&manifest_path)?)?;
    let blob = fs::read(&blob_path)?;

    let expected: usize = layers
        .iter()
        .map(|l| 4 * (l.weight_count() + l.bias_count))
        .sum();
    if blob.len() != expected {
        return Err(Error::ManifestMismatch(format!(
            "manifest declares {expected} bytes, weights.bin holds {}",
            blob.len()
        )));
    }

    let mut floats = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut weights = Vec::with_capacity(layers.len());
    let mut biases = Vec::with_capacity(layers.len());
    for spec in &layers {
        weights.push(floats.by_ref().take(spec.weight_count()).collect());
        biases.push(floats.by_ref().take(spec.bias_count).collect());
    }
    Model::new(layers, weights, biases)
}

/// Raw blob bytes for a model, in container order.
pub fn weight_blob(model: &Model) -> Vec<u8> {
    let mut blob = Vec::with_capacity(
        4 * model
            .layers
            .iter()
            .map(|l| l.weight_count() + l.bias_count)
            .sum::<usize>(),
    );
    for (w, b) in model.weights.iter().zip(&model.biases) {
        for v in w.iter().chain(b) {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    blob
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    let dir = path.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST_FILE), manifest_json(&model.layers)?)?;
    fs::write(dir.join(WEIGHTS_FILE), weight_blob(model))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// N(0, 1/fan_in)
    Gaussian,
    /// U[-1/√fan_in, 1/√fan_in]
    Uniform,
}

/// Random model for desk experiments. Biases start at zero.
pub fn synth_model(seed: u64, arch: &[LayerSpec], init: Init) -> Result<Model> {
    if arch.is_empty() {
        return Err(Error::EmptyArch);
    }
    validate_arch(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(arch.len());
    for spec in arch {
        let scale = 1.0 / (spec.fan_in() as f64).sqrt();
        let n = spec.weight_count();
        let w: Vec<f32> = match init {
            Init::Gaussian => {
                let dist = Normal::new(0.0, scale).expect("finite std");
                (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
            }
            Init::Uniform => {
                let dist = Uniform::new_inclusive(-scale, scale).expect("finite range");
                (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
            }
        };
        weights.push(w);
    }
    let biases = arch.iter().map(|s| vec![0.0; s.bias_count]).collect();
    Model::new(arch.to_vec(), weights, biases)
}
