use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("event at ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfBoundsEvent { x: u32, y: u32, width: u16, height: u16 },

    #[error("timestamp {t} us precedes the previous timestamp {previous} us")]
    NonMonotonicTimestamp { previous: u64, t: u64 },

    #[error("timestamp {0} is reserved for empty FIFO slots")]
    ReservedTimestamp(u64),

    #[error("invalid polarity value {raw} for the {convention} convention")]
    InvalidPolarity { raw: i64, convention: &'static str },

    #[error("invalid sensor geometry {width}x{height}")]
    InvalidGeometry { width: u32, height: u32 },

    #[error("event stream geometry {stream:?} does not match state geometry {state:?}")]
    GeometryMismatch { stream: (u16, u16), state: (u16, u16) },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state needs {cells} slots, above the budget of {budget}")]
    AllocationTooLarge { cells: u64, budget: u64 },

    #[error("query time {query} us is before the last ingested event at {last} us")]
    QueryBeforeLastEvent { query: u64, last: u64 },

    #[error("patch side must be odd, got {0}")]
    EvenPatchSize(usize),

    #[error("query times must be non-decreasing (index {index}: {t} us after {previous} us)")]
    UnsortedQueryTimes { index: usize, previous: u64, t: u64 },

    #[error("voxel grid needs at least 2 bins, got {0}")]
    InvalidBinCount(usize),

    #[error("invalid window: duration {duration} us ending at {t_end} us")]
    InvalidWindow { t_end: u64, duration: u64 },

    #[error("unsupported signal kind `{0}`")]
    UnsupportedSignal(String),

    #[error("event {index}: {source}")]
    AtEvent {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("file truncated: needed {needed} bytes at offset {offset}, {available} available")]
    TruncatedFile {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("header declares {declared} records but file holds {found}")]
    CountMismatch { declared: u64, found: u64 },

    #[error("unsupported tensor dtype tag {0}")]
    UnsupportedDtype(u8),

    #[error("tensor shape {dims:?} does not match {len} values")]
    ShapeMismatch { dims: Vec<usize>, len: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn at_event(index: usize, source: Error) -> Self {
        Error::AtEvent {
            index,
            source: Box::new(source),
        }
    }

    /// Strips `AtEvent` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtEvent { source, .. } => source.root(),
            other => other,
        }
    }
}
