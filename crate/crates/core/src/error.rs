use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid device spec: {0}")]
    InvalidDevice(String),

    #[error("degenerate weight scale: all weights are zero and no w_max was provided")]
    DegenerateWeightScale,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("empty topology")]
    EmptyTopology,

    #[error("invalid training config: {0}")]
    TrainConfig(String),

    #[error("training diverged: non-finite loss at update event {event}")]
    TrainingDiverged { event: u64 },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty image set")]
    EmptySet,

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadIdxMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("truncated IDX file {path}: {detail}")]
    TruncatedIdx { path: PathBuf, detail: String },

    #[error("IDX dimension mismatch in {path}: {detail}")]
    IdxDimensionMismatch { path: PathBuf, detail: String },

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("checkpoint version mismatch: file has {found}, reader supports {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("checkpoint checksum failure in section {section}")]
    Checksum { section: String },

    #[error("spec mismatch: checkpoint device {found} differs from configured device {expected}")]
    SpecMismatch { expected: String, found: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse failure category, used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } | Error::Csv(_) => ErrorCategory::Io,
            Error::Config(_) | Error::InvalidDevice(_) | Error::TrainConfig(_) => {
                ErrorCategory::Config
            }
            Error::BadIdxMagic { .. }
            | Error::TruncatedIdx { .. }
            | Error::IdxDimensionMismatch { .. }
            | Error::BadCheckpoint(_)
            | Error::VersionMismatch { .. }
            | Error::Checksum { .. }
            | Error::SpecMismatch { .. } => ErrorCategory::Data,
            Error::TrainingDiverged { .. } => ErrorCategory::Diverged,
            _ => ErrorCategory::Model,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Io,
    Data,
    Model,
    Diverged,
}

impl ErrorCategory {
    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Io => "io",
            ErrorCategory::Data => "data",
            ErrorCategory::Model => "model",
            ErrorCategory::Diverged => "diverged",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Io => 3,
            ErrorCategory::Data => 4,
            ErrorCategory::Model => 5,
            ErrorCategory::Diverged => 6,
        }
    }
}
