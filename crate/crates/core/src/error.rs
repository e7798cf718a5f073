use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // model container
    #[error("MissingFile: {0}")]
    MissingFile(PathBuf),
    #[error("ManifestMismatch: {0}")]
    ManifestMismatch(String),
    #[error("NonFiniteWeight: layer {layer} index {index}")]
    NonFiniteWeight { layer: String, index: usize },
    #[error("InvalidModel: {0}")]
    InvalidModel(String),
    #[error("EmptyArch: architecture has no layers")]
    EmptyArch,
    #[error("IoFailure: {0}")]
    Io(#[from] std::io::Error),
    #[error("InvalidManifest: {0}")]
    Json(#[from] serde_json::Error),

    // inference
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("ZeroOutputNorm: sample {sample} produces a zero output vector")]
    ZeroOutputNorm { sample: usize },
    #[error("ZeroVector: cosine distance undefined for a zero vector")]
    ZeroVector,
    #[error("InvalidCalibration: {0}")]
    InvalidCalibration(String),

    // quantizer
    #[error("NonPositiveDelta: bin width {0} is not a positive finite number")]
    NonPositiveDelta(f64),
    #[error("ZeroNormLayer: layer has zero norm")]
    ZeroNormLayer,
    #[error("DegenerateRange: max(w) == min(w)")]
    DegenerateRange,
    #[error("TooFewSamples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("EmptyInput")]
    EmptyInput,
    #[error("SymbolOverflow: quantized index does not fit in 64 bits")]
    SymbolOverflow,
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("layer {name}: {source}")]
    Layer { name: String, source: Box<Error> },

    // search
    #[error("Eps0OutOfRange: eps0 = {0} must lie in (0, 1)")]
    Eps0OutOfRange(f64),
    #[error("BudgetOutOfRange: {0}")]
    BudgetOutOfRange(String),
    #[error("Unsatisfiable: no k <= k_max meets the constraint")]
    Unsatisfiable(Box<crate::search::SearchOutcome>),

    // entropy coder / archive
    #[error("AlphabetTooLarge: {size} symbols exceed 2^{precision}")]
    AlphabetTooLarge { size: usize, precision: u32 },
    #[error("InvalidPrecision: {0}")]
    InvalidPrecision(u32),
    #[error("SymbolNotInTable: {0}")]
    SymbolNotInTable(i64),
    #[error("CorruptStream: {0}")]
    CorruptStream(&'static str),
    #[error("Mismatch: {0}")]
    Mismatch(String),
    #[error("BadMagic")]
    BadMagic,
    #[error("VersionUnsupported: {0}")]
    VersionUnsupported(u16),
    #[error("ChecksumMismatch")]
    ChecksumMismatch,
    #[error("CorruptArchive: {0}")]
    CorruptArchive(String),
    #[error("UnknownLayer: {0}")]
    UnknownLayer(String),

    // analysis
    #[error("DegenerateFit: {0}")]
    DegenerateFit(String),
    #[error("DimensionTooLarge: {0} > 512")]
    DimensionTooLarge(usize),
    #[error("InvalidGrid: {0}")]
    InvalidGrid(String),
}

impl Error {
    pub(crate) fn in_layer(self, name: &str) -> Error {
        Error::Layer {
            name: name.to_string(),
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through layer context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Layer { source, .. } => source.root(),
            other => other,
        }
    }
}
