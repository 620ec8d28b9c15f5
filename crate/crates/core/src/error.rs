use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while assembling networks, loading data, or training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("layer {layer} ({kind}): {message}")]
    LayerShape {
        layer: usize,
        kind: &'static str,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("architecture string: {0}")]
    Arch(String),

    #[error("{path}: bad IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    IdxMagic { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: truncated file, need {needed} bytes but found {found}")]
    Truncated { path: PathBuf, needed: usize, found: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("event parse error at byte offset {offset}: {message}")]
    EventParse { offset: usize, message: String },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },

    #[error("checkpoint: bad magic")]
    CheckpointMagic,

    #[error("checkpoint: unsupported version {0}")]
    CheckpointVersion(u32),

    #[error("checkpoint: config digest mismatch")]
    CheckpointDigest,

    #[error("checkpoint: truncated (need {needed} bytes, found {found})")]
    CheckpointTruncated { needed: usize, found: usize },

    #[error("checkpoint: architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("non-finite {what} in layer {layer}, step {step}, neuron {neuron}")]
    NonFinite {
        what: &'static str,
        layer: usize,
        step: usize,
        neuron: usize,
    },

    #[error("{path}:{line}: {message}")]
    ConfigFile {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
