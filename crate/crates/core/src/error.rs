use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed WAV file {path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("unsupported audio encoding in {path}: {encoding}")]
    UnsupportedEncoding { path: PathBuf, encoding: String },

    #[error("audio file {0} contains no samples")]
    EmptyAudio(PathBuf),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("clip of {len} samples is shorter than one {window}-sample window")]
    ClipTooShort { len: usize, window: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("need at least 2 values per band to estimate a standard deviation, got {0}")]
    TooFewFrames(usize),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("feature fingerprint mismatch: statistics were computed for {stats}, data is {data}")]
    FingerprintMismatch { stats: String, data: String },

    #[error("missing {0} labels")]
    MissingLabels(&'static str),

    #[error("segment length {len} does not divide dataset size {n}")]
    SegmentRemainder { len: usize, n: usize },

    #[error("device {device}: {source}")]
    Device {
        device: String,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_)
            | Error::SampleRateMismatch { .. }
            | Error::FingerprintMismatch { .. }
            | Error::SegmentRemainder { .. } => ErrorKind::Config,
            Error::NonFinite(_) | Error::Diverged { .. } => ErrorKind::Numerical,
            Error::Device { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
