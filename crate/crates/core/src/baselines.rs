//! Windowed reference representations: event frame, event count, surface
//! of active events (SAE) and a bilinear voxel grid.
//!
//! Windows are half-open, `(t_end - duration, t_end]`, so back-to-back
//! windows partition a stream.

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity, SensorGeometry};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    t_end: u64,
    duration: u64,
}

impl WindowSpec {
    pub fn new(t_end: u64, duration: u64) -> Result<Self> {
        if duration == 0 || t_end < duration {
            return Err(Error::InvalidWindow { t_end, duration });
        }
        Ok(WindowSpec { t_end, duration })
    }

    pub fn t_end(&self) -> u64 {
        self.t_end
    }

    pub fn duration(&self) -> u64 {
        self.duration
    }

    /// Exclusive lower edge.
    pub fn start(&self) -> u64 {
        self.t_end - self.duration
    }

    #[inline]
    pub fn contains(&self, t: u64) -> bool {
        t > self.start() && t <= self.t_end
    }

    fn events<'a>(&self, stream: &'a EventStream) -> impl Iterator<Item = &'a Event> + 'a {
        let w = *self;
        stream.events().iter().filter(move |e| w.contains(e.t))
    }
}

fn plane_dims(g: SensorGeometry) -> (usize, usize) {
    (g.height() as usize, g.width() as usize)
}

/// Signed polarity sum per pixel, `[H, W]`.
pub fn event_frame(stream: &EventStream, window: WindowSpec) -> Tensor {
    let g = stream.geometry();
    let (h, w) = plane_dims(g);
    let mut out = Tensor::zeros(vec![h, w]);
    let data = out.data_mut();
    for e in window.events(stream) {
        data[g.pixel_index(e.x, e.y)] += f64::from(e.p.sign());
    }
    out
}

/// Per-polarity counts, `[2, H, W]`.
pub fn event_count(stream: &EventStream, window: WindowSpec) -> Tensor {
    let g = stream.geometry();
    let (h, w) = plane_dims(g);
    let plane = h * w;
    let mut out = Tensor::zeros(vec![Polarity::CHANNELS, h, w]);
    let data = out.data_mut();
    for e in window.events(stream) {
        data[e.p.channel() * plane + g.pixel_index(e.x, e.y)] += 1.0;
    }
    out
}

/// Most recent timestamp per pixel and polarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sae {
    geometry: SensorGeometry,
    times: Vec<u64>,
    valid: Vec<bool>,
    sentinel: u64,
}

impl Sae {
    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    /// `[2][H][W]` timestamps; never-fired cells hold the sentinel.
    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn sentinel(&self) -> u64 {
        self.sentinel
    }

    pub fn get(&self, x: u16, y: u16, p: Polarity) -> Option<u64> {
        let i = p.channel() * self.geometry.pixel_count() + self.geometry.pixel_index(x, y);
        self.valid[i].then_some(self.times[i])
    }

    /// `[2, H, W]` timestamps as doubles (exact below 2^53 us).
    pub fn to_tensor(&self) -> Tensor {
        let (h, w) = plane_dims(self.geometry);
        Tensor::new(
            vec![Polarity::CHANNELS, h, w],
            self.times.iter().map(|&t| t as f64).collect(),
        )
        .expect("shape matches data")
    }

    /// `[2, H, W]` of 1.0 where a cell has fired, else 0.0.
    pub fn mask_tensor(&self) -> Tensor {
        let (h, w) = plane_dims(self.geometry);
        Tensor::new(
            vec![Polarity::CHANNELS, h, w],
            self.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        )
        .expect("shape matches data")
    }
}

pub const SAE_DEFAULT_SENTINEL: u64 = 0;

pub fn sae(stream: &EventStream, t_end: u64) -> Sae {
    sae_with_sentinel(stream, t_end, SAE_DEFAULT_SENTINEL)
}

pub fn sae_with_sentinel(stream: &EventStream, t_end: u64, sentinel: u64) -> Sae {
    let g = stream.geometry();
    let plane = g.pixel_count();
    let mut times = vec![sentinel; Polarity::CHANNELS * plane];
    let mut valid = vec![false; Polarity::CHANNELS * plane];
    for e in stream.events().iter().filter(|e| e.t <= t_end) {
        let i = e.p.channel() * plane + g.pixel_index(e.x, e.y);
        if !valid[i] || e.t > times[i] {
            times[i] = e.t;
            valid[i] = true;
        }
    }
    Sae {
        geometry: g,
        times,
        valid,
        sentinel,
    }
}

/// Bilinear temporal kernel: weight of bin `b` for normalized time `t_star`.
#[inline]
pub fn bilinear_weight(bin: usize, t_star: f64) -> f64 {
    (1.0 - (bin as f64 - t_star).abs()).max(0.0)
}

/// Polarity-weighted voxel grid, `[B, H, W]`.
///
/// Each in-window event sits at `t* = (t - start) / duration * (B - 1)` and
/// adds `p * max(0, 1 - |b - t*|)` to its two nearest bins. Polarity is kept
/// signed and no per-grid normalization is applied.
pub fn voxel_grid(stream: &EventStream, window: WindowSpec, bins: usize) -> Result<Tensor> {
    if bins < 2 {
        return Err(Error::InvalidBinCount(bins));
    }
    let g = stream.geometry();
    let (h, w) = plane_dims(g);
    let plane = h * w;
    let mut out = Tensor::zeros(vec![bins, h, w]);
    let data = out.data_mut();
    let scale = (bins - 1) as f64 / window.duration() as f64;
    let start = window.start();
    for e in window.events(stream) {
        let t_star = (e.t - start) as f64 * scale;
        let lower = (t_star.floor() as usize).min(bins - 1);
        let pix = g.pixel_index(e.x, e.y);
        let sign = f64::from(e.p.sign());
        for b in [lower, lower + 1] {
            if b < bins {
                let wgt = bilinear_weight(b, t_star);
                if wgt > 0.0 {
                    data[b * plane + pix] += sign * wgt;
                }
            }
        }
    }
    Ok(out)
}
