//! The `.rqz` compressed archive.
//!
//! Little-endian layout:
//!
//! ```text
//! "RQZ1" | u16 version | u32 layer_count
//! per layer:
//!     u16 name_len | name | u32 n | f64 delta
//!     u16 alphabet_size | alphabet (zig-zag varint deltas) | u16 precision | u16 scaled[alphabet_size]
//!     u32 stream_len | stream
//! u32 meta_len | meta (JSON: layer specs, quantization config, zero-norm flags)
//! f32 biases, per layer in order
//! u64 FNV-1a of every preceding byte
//! ```
//!
//! Each layer stream decodes independently of the others.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_arch, LayerSpec, Model};
use crate::quant::{empirical_entropy, QuantConfig, QuantizedLayer, QuantizedModel};
use crate::rans::{self, build_table, precision_for, unzigzag, FrequencyTable};

pub const MAGIC: &[u8; 4] = b"RQZ1";
pub const VERSION: u16 = 1;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub n: u32,
    pub delta: f64,
    pub table: FrequencyTable,
    pub stream: Vec<u8>,
}

impl LayerRecord {
    pub fn decode_symbols(&self) -> Result<Vec<i64>> {
        rans::decode(&self.stream, &self.table, self.n as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub layers: Vec<LayerSpec>,
    pub config: QuantConfig,
    #[serde(default)]
    pub zero_norm: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedArchive {
    pub records: Vec<LayerRecord>,
    pub meta: ArchiveMeta,
    pub biases: Vec<Vec<f32>>,
}

fn encode_layer(name: &str, layer: &QuantizedLayer) -> Result<LayerRecord> {
    if layer.is_empty() {
        return Err(Error::EmptyInput);
    }
    let support = crate::quant::histogram(&layer.symbols).len();
    let table = build_table(&layer.symbols, precision_for(support))?;
    let stream = rans::encode(&layer.symbols, &table)?;
    Ok(LayerRecord {
        name: name.to_string(),
        n: u32::try_from(layer.len())
            .map_err(|_| Error::Mismatch(format!("layer {name} too large")))?,
        delta: layer.delta,
        table,
        stream,
    })
}

/// Entropy-code every layer of a quantized model.
pub fn compress(qmodel: &QuantizedModel) -> Result<CompressedArchive> {
    if qmodel.layers.is_empty() {
        return Err(Error::Mismatch("cannot compress an empty model".into()));
    }
    let records = qmodel
        .layers
        .par_iter()
        .zip(&qmodel.specs)
        .map(|(layer, spec)| encode_layer(&spec.name, layer).map_err(|e| e.in_layer(&spec.name)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompressedArchive {
        records,
        meta: ArchiveMeta {
            layers: qmodel.specs.clone(),
            config: qmodel.config,
            zero_norm: qmodel.layers.iter().map(|l| l.zero_norm).collect(),
        },
        biases: qmodel.biases.clone(),
    })
}

impl CompressedArchive {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            let name = r.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Mismatch("layer name too long".into()))?;
            if r.table.len() > u16::MAX as usize {
                return Err(Error::AlphabetTooLarge {
                    size: r.table.len(),
                    precision: r.table.precision,
                });
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&r.n.to_le_bytes());
            out.extend_from_slice(&r.delta.to_le_bytes());
            r.table.write_to(&mut out);
            out.extend_from_slice(&(r.stream.len() as u32).to_le_bytes());
            out.extend_from_slice(&r.stream);
        }
        let meta = serde_json::to_vec(&self.meta)?;
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for b in &self.biases {
            for v in b {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let checksum = fnv1a64(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        Ok(out)
    }

    /// Bytes of the metadata block and raw biases, which carry no weights.
    pub fn side_bytes(&self) -> Result<usize> {
        let meta = serde_json::to_vec(&self.meta)?.len();
        let biases: usize = self.biases.iter().map(Vec::len).sum();
        Ok(4 + meta + 4 * biases)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < 4 + 2 + 8 {
            return Err(Error::CorruptArchive("archive truncated".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a64(body) != stored {
            return Err(Error::ChecksumMismatch);
        }

        let mut rd = Reader { buf: body, pos: 6 };
        let count = rd.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = rd.u16()? as usize;
            let name = String::from_utf8(rd.take(name_len)?.to_vec())
                .map_err(|_| Error::CorruptArchive("layer name is not UTF-8".into()))?;
            let n = rd.u32()?;
            let delta = rd.f64()?;
            let alphabet_size = rd.u16()? as usize;
            let mut alphabet = Vec::with_capacity(alphabet_size);
            let mut prev = 0i64;
            for _ in 0..alphabet_size {
                prev = prev.wrapping_add(unzigzag(rd.varint()?));
                alphabet.push(prev);
            }
            let precision = rd.u16()? as u32;
            let scaled = (0..alphabet_size)
                .map(|_| rd.u16().map(u32::from))
                .collect::<Result<Vec<_>>>()?;
            let table = FrequencyTable::from_scaled(alphabet, scaled, precision)?;
            let stream_len = rd.u32()? as usize;
            let stream = rd.take(stream_len)?.to_vec();
            records.push(LayerRecord {
                name,
                n,
                delta,
                table,
                stream,
            });
        }
        let meta_len = rd.u32()? as usize;
        let meta: ArchiveMeta = serde_json::from_slice(rd.take(meta_len)?)
            .map_err(|e| Error::CorruptArchive(format!("metadata: {e}")))?;
        validate_arch(&meta.layers)?;
        if meta.layers.len() != records.len()
            || meta
                .layers
                .iter()
                .zip(&records)
                .any(|(s, r)| s.name != r.name || s.weight_count() != r.n as usize)
        {
            return Err(Error::CorruptArchive(
                "metadata disagrees with layer records".into(),
            ));
        }
        let mut biases = Vec::with_capacity(meta.layers.len());
        for spec in &meta.layers {
            let raw = rd.take(4 * spec.bias_count)?;
            biases.push(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            );
        }
        if rd.pos != body.len() {
            return Err(Error::CorruptArchive(
                "trailing bytes before checksum".into(),
            ));
        }
        Ok(CompressedArchive {
            records,
            meta,
            biases,
        })
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.name.as_str())
    }

    fn decode_layer_at(&self, i: usize) -> Result<QuantizedLayer> {
        let r = &self.records[i];
        let symbols = r.decode_symbols().map_err(|e| e.in_layer(&r.name))?;
        let zero_norm = self.meta.zero_norm.get(i).copied().unwrap_or(false);
        Ok(QuantizedLayer::from_symbols(r.delta, symbols, zero_norm))
    }

    /// Decode every layer stream.
    pub fn to_quantized(&self) -> Result<QuantizedModel> {
        let layers = (0..self.records.len())
            .into_par_iter()
            .map(|i| self.decode_layer_at(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantizedModel {
            layers,
            config: self.meta.config,
            specs: self.meta.layers.clone(),
            biases: self.biases.clone(),
        })
    }

    /// Decode into an f32 model with ŵ = symbols·Δ.
    pub fn to_model(&self) -> Result<Model> {
        self.to_quantized()?.to_model()
    }

    /// Decode a single layer into a one-layer model.
    pub fn decode_layer(&self, name: &str) -> Result<Model> {
        let i = self
            .records
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))?;
        let layer = self.decode_layer_at(i)?;
        Model::new(
            vec![self.meta.layers[i].clone()],
            vec![layer.reconstruct_f32()],
            vec![self.biases[i].clone()],
        )
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptArchive("archive truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::CorruptArchive("varint overflow".into()))
    }
}

pub fn write_archive(archive: &CompressedArchive, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, archive.to_bytes()?)?;
    Ok(())
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<CompressedArchive> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    CompressedArchive::from_bytes(&fs::read(path)?)
}

/// Compression ratio against a 32-bit baseline, both predicted from entropy
/// and measured on the serialized archive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioReport {
    /// 32·Σn / (Σ n·H + Σ|T|)
    pub estimated: f64,
    /// 32·Σn / bits of the weight payload (header, layer records, checksum)
    pub actual: f64,
    pub payload_bytes: usize,
    /// Metadata and biases stored alongside the payload.
    pub side_bytes: usize,
    pub archive_bytes: usize,
}

/// Entropy-based estimate 32·Σn_ℓ / (Σ n_ℓ·H(ŵ_ℓ) + Σ|T_ℓ|), without running
/// the coder.
pub fn estimated_ratio(qmodel: &QuantizedModel) -> Result<f64> {
    let mut bits = 0.0;
    for l in &qmodel.layers {
        let support = crate::quant::histogram(&l.symbols).len();
        let table = build_table(&l.symbols, precision_for(support))?;
        bits += l.len() as f64 * empirical_entropy(&l.symbols)? + table.size_bits() as f64;
    }
    Ok(32.0 * qmodel.total_weights() as f64 / bits.max(f64::MIN_POSITIVE))
}

pub fn compression_ratio(
    qmodel: &QuantizedModel,
    archive: &CompressedArchive,
) -> Result<RatioReport> {
    if qmodel.layers.is_empty() {
        return Err(Error::Mismatch("empty model".into()));
    }
    let same = qmodel.layers.len() == archive.records.len()
        && qmodel
            .specs
            .iter()
            .zip(&qmodel.layers)
            .zip(&archive.records)
            .all(|((s, l), r)| s.name == r.name && l.len() == r.n as usize);
    if !same {
        return Err(Error::Mismatch(
            "archive layers differ from the quantized model".into(),
        ));
    }
    let mut est_bits = 0.0;
    for (l, r) in qmodel.layers.iter().zip(&archive.records) {
        est_bits += l.len() as f64 * empirical_entropy(&l.symbols)? + r.table.size_bits() as f64;
    }
    let total = qmodel.total_weights() as f64;
    let archive_bytes = archive.to_bytes()?.len();
    let side_bytes = archive.side_bytes()?;
    let payload_bytes = archive_bytes - side_bytes;
    Ok(RatioReport {
        estimated: 32.0 * total / est_bits.max(f64::MIN_POSITIVE),
        actual: 32.0 * total / (8.0 * payload_bytes as f64),
        payload_bytes,
        side_bytes,
        archive_bytes,
    })
}
