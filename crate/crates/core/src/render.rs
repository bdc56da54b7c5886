//! TORE volume rendering: clamped log-time differences between a query
//! time and each FIFO slot.
//!
//! For a slot holding timestamp `s` and a query time `t`:
//!
//! ```text
//! value = max(min(ln(t - s + 1), ln tau), ln tau')
//! ```
//!
//! Empty slots behave as `s = -inf` and saturate to `ln tau`. The `+ 1` is
//! applied to the integer microsecond difference before the log, and the
//! log is natural. Output is `[2, K, H, W]`, row-major, channel 0 = on.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity, SensorGeometry, EMPTY_SLOT};
use crate::state::{SensorState, ToreConfig};
use crate::tensor::Tensor;

/// Planes smaller than this are filled on the calling thread.
const PARALLEL_MIN_PLANE: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct ToreVolume {
    query_time: u64,
    config: ToreConfig,
    geometry: SensorGeometry,
    data: Vec<f64>,
}

impl ToreVolume {
    pub fn query_time(&self) -> u64 {
        self.query_time
    }

    pub fn config(&self) -> &ToreConfig {
        &self.config
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    /// `[2, K, H, W]`
    pub fn shape(&self) -> [usize; 4] {
        [
            Polarity::CHANNELS,
            self.config.depth,
            self.geometry.height() as usize,
            self.geometry.width() as usize,
        ]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Zero-based `k`.
    #[inline]
    pub fn get(&self, channel: usize, k: usize, y: usize, x: usize) -> f64 {
        let [_, depth, h, w] = self.shape();
        self.data[((channel * depth + k) * h + y) * w + x]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape().to_vec(), self.data.clone()).expect("shape matches data")
    }

    pub fn into_tensor(self) -> Tensor {
        let dims = self.shape().to_vec();
        Tensor::new(dims, self.data).expect("shape matches data")
    }
}

/// A `[2, K, m, m]` volume around an event of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct TorePatch {
    center: (u16, u16),
    side: usize,
    query_time: u64,
    config: ToreConfig,
    data: Vec<f64>,
}

impl TorePatch {
    pub fn center(&self) -> (u16, u16) {
        self.center
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn query_time(&self) -> u64 {
        self.query_time
    }

    pub fn shape(&self) -> [usize; 4] {
        [Polarity::CHANNELS, self.config.depth, self.side, self.side]
    }

    /// Channels once polarity and depth are flattened together (2K).
    pub fn flat_channels(&self) -> usize {
        Polarity::CHANNELS * self.config.depth
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Zero-based `k`; `(row, col)` are patch-local.
    #[inline]
    pub fn get(&self, channel: usize, k: usize, row: usize, col: usize) -> f64 {
        let m = self.side;
        self.data[((channel * self.config.depth + k) * m + row) * m + col]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape().to_vec(), self.data.clone()).expect("shape matches data")
    }
}

/// Clamped value for one slot. `slot` must not be after `t` unless empty.
#[inline]
pub fn tore_value(t: u64, slot: u64, ln_tau: f64, ln_tau_prime: f64) -> f64 {
    if slot == EMPTY_SLOT {
        return ln_tau;
    }
    let diff = t - slot;
    (diff.saturating_add(1) as f64).ln().min(ln_tau).max(ln_tau_prime)
}

#[inline]
fn unclamped_value(t: u64, slot: u64, saturation: f64) -> f64 {
    if slot == EMPTY_SLOT {
        return saturation;
    }
    ((t - slot).saturating_add(1) as f64).ln()
}

fn check_causal(state: &SensorState, t: u64) -> Result<()> {
    match state.last_event_time() {
        Some(last) if t < last => Err(Error::QueryBeforeLastEvent { query: t, last }),
        _ => Ok(()),
    }
}

fn fill<F>(state: &SensorState, f: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync,
{
    let slots = state.slots();
    let plane = state.plane_len();
    let mut data = vec![0.0; slots.len()];
    if plane >= PARALLEL_MIN_PLANE {
        data.par_chunks_mut(plane)
            .zip(slots.par_chunks(plane))
            .for_each(|(out, src)| {
                for (o, &s) in out.iter_mut().zip(src) {
                    *o = f(s);
                }
            });
    } else {
        for (o, &s) in data.iter_mut().zip(slots) {
            *o = f(s);
        }
    }
    data
}

pub fn render_volume(state: &SensorState, t: u64) -> Result<ToreVolume> {
    check_causal(state, t)?;
    let config = *state.config();
    let (hi, lo) = (config.ln_tau(), config.ln_tau_prime());
    let data = fill(state, |s| tore_value(t, s, hi, lo));
    Ok(ToreVolume {
        query_time: t,
        config,
        geometry: state.geometry(),
        data,
    })
}

/// Log-time differences without the tau / tau' clamps; empty slots map to `ln tau`.
pub fn render_unclamped(state: &SensorState, t: u64) -> Result<ToreVolume> {
    render_unclamped_with(state, t, state.config().ln_tau())
}

pub fn render_unclamped_with(state: &SensorState, t: u64, saturation: f64) -> Result<ToreVolume> {
    check_causal(state, t)?;
    let data = fill(state, |s| unclamped_value(t, s, saturation));
    Ok(ToreVolume {
        query_time: t,
        config: *state.config(),
        geometry: state.geometry(),
        data,
    })
}

/// Renders the `m x m` neighbourhood of `e` at time `e.t`. The caller is
/// expected to have inserted `e` already; positions off the sensor read as
/// never-fired pixels (`ln tau`).
pub fn render_patch(state: &SensorState, e: &Event, side: usize) -> Result<TorePatch> {
    if side.is_multiple_of(2) {
        return Err(Error::EvenPatchSize(side));
    }
    let geometry = state.geometry();
    geometry.check(e.x, e.y)?;
    check_causal(state, e.t)?;

    let config = *state.config();
    let (hi, lo) = (config.ln_tau(), config.ln_tau_prime());
    let depth = config.depth;
    let half = (side / 2) as i64;
    let mut data = vec![hi; Polarity::CHANNELS * depth * side * side];
    for row in 0..side {
        let y = e.y as i64 + row as i64 - half;
        if y < 0 || y >= geometry.height() as i64 {
            continue;
        }
        for col in 0..side {
            let x = e.x as i64 + col as i64 - half;
            if x < 0 || x >= geometry.width() as i64 {
                continue;
            }
            for channel in 0..Polarity::CHANNELS {
                for k in 0..depth {
                    let slot = state.slot(channel, k, y as u16, x as u16);
                    data[((channel * depth + k) * side + row) * side + col] = tore_value(e.t, slot, hi, lo);
                }
            }
        }
    }
    Ok(TorePatch {
        center: (e.x, e.y),
        side,
        query_time: e.t,
        config,
        data,
    })
}

/// Replays `stream` once, rendering a volume at each query time from the
/// events with `t <= query`.
pub fn render_series(stream: &EventStream, config: ToreConfig, times: &[u64]) -> Result<Vec<ToreVolume>> {
    check_sorted(times)?;
    let mut state = SensorState::new(stream.geometry(), config)?;
    let events = stream.events();
    let mut next = 0;
    let mut volumes = Vec::with_capacity(times.len());
    for &t in times {
        let end = next + events[next..].partition_point(|e| e.t <= t);
        state
            .ingest_events(&events[next..end])
            .map_err(|err| offset_index(err, next))?;
        next = end;
        volumes.push(render_volume(&state, t)?);
    }
    Ok(volumes)
}

pub fn check_sorted(times: &[u64]) -> Result<()> {
    for (i, w) in times.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(Error::UnsortedQueryTimes {
                index: i + 1,
                previous: w[0],
                t: w[1],
            });
        }
    }
    Ok(())
}

fn offset_index(err: Error, offset: usize) -> Error {
    match err {
        Error::AtEvent { index, source } => Error::AtEvent {
            index: index + offset,
            source,
        },
        other => other,
    }
}

/// Patches for selected events of a stream, in one pass.
///
/// With `include_self` each event of interest is inserted before its patch
/// is taken; without it the patch shows only the events that preceded it.
/// Indices are deduplicated and returned in ascending order.
pub fn extract_patches(
    stream: &EventStream,
    config: ToreConfig,
    side: usize,
    indices: &[usize],
    include_self: bool,
) -> Result<Vec<(usize, TorePatch)>> {
    if side.is_multiple_of(2) {
        return Err(Error::EvenPatchSize(side));
    }
    let events = stream.events();
    let mut wanted = indices.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    if let Some(&bad) = wanted.iter().find(|&&i| i >= events.len()) {
        return Err(Error::InvalidConfig(format!(
            "event index {bad} out of range for a stream of {} events",
            events.len()
        )));
    }

    let mut state = SensorState::new(stream.geometry(), config)?;
    let mut applied = 0;
    let mut out = Vec::with_capacity(wanted.len());
    for index in wanted {
        let upto = if include_self { index + 1 } else { index };
        state
            .ingest_events(&events[applied..upto])
            .map_err(|err| offset_index(err, applied))?;
        applied = upto;
        out.push((index, render_patch(&state, &events[index], side)?));
    }
    Ok(out)
}
