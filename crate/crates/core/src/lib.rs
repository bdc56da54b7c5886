//! Event-camera state and Time-Ordered Recent Event (TORE) volumes.
//!
//! A [`SensorState`] keeps, for every pixel and polarity, a FIFO of the K
//! most recent event timestamps. Volumes are rendered from it at any query
//! time at or after the last event, full-frame or as patches around an
//! event of interest. The crate also carries a threshold-crossing event
//! simulator, windowed baseline representations, bit-exact file formats and
//! a randomized verification harness.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod event;
pub mod io;
pub mod render;
pub mod simulator;
pub mod state;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use event::{
    normalize_polarity, validate_stream, Event, EventStream, Polarity, PolarityConvention, SensorGeometry,
    TimestampPolicy, EMPTY_SLOT,
};
pub use render::{
    extract_patches, render_patch, render_series, render_unclamped, render_volume, TorePatch, ToreVolume,
};
pub use state::{IngestStats, SensorState, ToreConfig};
pub use tensor::Tensor;
