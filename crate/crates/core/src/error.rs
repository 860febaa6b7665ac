use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} elements")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("expected a single-element tensor, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("parameter name must not be empty")]
    EmptyName,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RleError {
    #[error("empty RLE string")]
    Empty,
    #[error("token {position}: {token:?} is not a positive integer")]
    InvalidToken { position: usize, token: String },
    #[error("odd number of tokens ({0}); expected start/length pairs")]
    OddTokenCount(usize),
    #[error("token {position}: run {start}+{length} exceeds {limit} pixels")]
    RunOutOfBounds {
        position: usize,
        start: usize,
        length: usize,
        limit: usize,
    },
    #[error("token {position}: run starting at {start} overlaps or precedes the previous run ending at {previous_end}")]
    OverlappingRuns {
        position: usize,
        start: usize,
        previous_end: usize,
    },
    #[error("mask dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
}

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("pixel buffer of length {len} does not match {width}x{height}")]
    BufferLength { width: usize, height: usize, len: usize },
    #[error("corrupt image: {0}")]
    Corrupt(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint stream truncated while reading {0}")]
    Truncated(&'static str),
    #[error("invalid checkpoint config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch for parameter {name}: model expects {expected:?}, checkpoint has {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint is missing array {0}")]
    MissingArray(String),
    #[error("checkpoint contains unknown array {0}")]
    UnknownArray(String),
    #[error("checkpoint contains array {0} more than once")]
    DuplicateArray(String),
    #[error("partial load accepts only names with prefix {prefix:?}, found {name}")]
    NotEncoderArray { prefix: String, name: String },
    #[error("invalid UTF-8 in {0}")]
    Utf8(&'static str),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input {what}: {detail}")]
    BadInput { what: &'static str, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("CSV line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("CSV header must be `ImageId,EncodedPixels`, found {0:?}")]
    Header(String),
    #[error("sample {id}: {source}")]
    Rle { id: String, source: RleError },
    #[error("sample {id}: cannot read {path}: {source}")]
    Io {
        id: String,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sample {id}: {source}")]
    Image { id: String, source: ImagingError },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("cannot aggregate an empty list of entries")]
    Empty,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Top-level error for pipeline operations that cross module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Rle(#[from] RleError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Store(#[from] crate::service::store::StoreError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Tensor(_) => "tensor",
            Error::Rle(_) => "rle",
            Error::Imaging(_) => "image",
            Error::Checkpoint(_) => "checkpoint",
            Error::Model(_) => "model",
            Error::Data(_) => "data",
            Error::Metric(_) => "metric",
            Error::Store(_) => "store",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
