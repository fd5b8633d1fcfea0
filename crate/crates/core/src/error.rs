//! Error type shared by every module in the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("extent {extent} is not a power of two")]
    NotPowerOfTwo { extent: usize },

    #[error("mode count {m} out of range for extent {extent} (need 1 <= m <= {extent}/2)")]
    ModeRange { m: usize, extent: usize },

    #[error("resolution below mode support: modes ({m1}, {m2}) need a grid larger than {h}x{w}")]
    ResolutionBelowModeSupport {
        m1: usize,
        m2: usize,
        h: usize,
        w: usize,
    },

    #[error("reduction over an empty axis has no maximum")]
    EmptyReduce,

    #[error("coincident source and observation point: Green's function is singular")]
    CoincidentPoints,

    #[error("target sample {sample} has zero norm")]
    ZeroNormTarget { sample: usize },

    #[error("non-finite gradient in parameter block '{block}'")]
    NonFiniteGradient { block: String },

    #[error("loss is not finite at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("file is truncated: {context}")]
    Truncated { context: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 usage/config, 3 I/O or file format,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NanLoss { .. } | Error::NonFiniteGradient { .. } | Error::Numeric(_) => 4,
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::Truncated { .. }
            | Error::Format(_) => 3,
            _ => 2,
        }
    }
}
