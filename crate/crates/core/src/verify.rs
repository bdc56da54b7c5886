//! Randomized end-to-end checks of the FIFO and rendering paths against a
//! brute-force oracle, used by the `verify` command.
//!
//! The oracle never touches [`SensorState`]: for every cell it gathers the
//! full event history, keeps the K most recent timestamps at or before the
//! query time, and evaluates the clamped log difference directly.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::event::{validate_stream, Event, EventStream, Polarity, SensorGeometry, TimestampPolicy};
use crate::render::render_volume;
use crate::state::{SensorState, ToreConfig};

/// Seeded stream with uniform pixels and polarities and gaps in `0..=max_gap_us`.
pub fn random_stream(
    rng: &mut impl Rng,
    geometry: SensorGeometry,
    events: usize,
    start_us: u64,
    max_gap_us: u64,
) -> EventStream {
    let mut t = start_us;
    let events = (0..events)
        .map(|_| {
            t += rng.gen_range(0..=max_gap_us);
            Event::new(
                rng.gen_range(0..geometry.width()),
                rng.gen_range(0..geometry.height()),
                t,
                Polarity::from_sign(rng.gen()),
            )
        })
        .collect();
    validate_stream(events, geometry, TimestampPolicy::Reject).expect("generated stream is valid")
}

pub fn shift_stream(stream: &EventStream, delta: u64) -> EventStream {
    let events = stream.events().iter().map(|e| Event { t: e.t + delta, ..*e }).collect();
    validate_stream(events, stream.geometry(), TimestampPolicy::Reject).expect("shift keeps order")
}

/// Brute-force `[2, K, H, W]` volume from the raw event history.
pub fn oracle_volume(events: &[Event], geometry: SensorGeometry, config: &ToreConfig, t: u64) -> Vec<f64> {
    let plane = geometry.pixel_count();
    let mut history: Vec<Vec<u64>> = vec![Vec::new(); 2 * plane];
    for e in events {
        history[e.p.channel() * plane + geometry.pixel_index(e.x, e.y)].push(e.t);
    }
    let (hi, lo) = (config.ln_tau(), config.ln_tau_prime());
    let depth = config.depth;
    let mut out = vec![0.0; 2 * depth * plane];
    for (cell, times) in history.iter_mut().enumerate() {
        let (channel, pix) = (cell / plane, cell % plane);
        times.retain(|&s| s <= t);
        times.sort_unstable_by(|a, b| b.cmp(a));
        for k in 0..depth {
            let raw = match times.get(k) {
                Some(&s) => ((t - s + 1) as f64).ln(),
                None => f64::INFINITY,
            };
            out[(channel * depth + k) * plane + pix] = raw.min(hi).max(lo);
        }
    }
    out
}

/// Location of a disagreement, as `(channel, k, y, x)` with zero-based `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub cell: (usize, usize, usize, usize),
    pub expected: f64,
    pub actual: f64,
}

fn unflatten(i: usize, depth: usize, g: SensorGeometry) -> (usize, usize, usize, usize) {
    let (w, h) = (g.width() as usize, g.height() as usize);
    let x = i % w;
    let y = (i / w) % h;
    let k = (i / (w * h)) % depth;
    let c = i / (w * h * depth);
    (c, k, y, x)
}

/// First cell where the two volumes differ bitwise.
pub fn first_mismatch(expected: &[f64], actual: &[f64], depth: usize, g: SensorGeometry) -> Option<Mismatch> {
    expected
        .iter()
        .zip(actual)
        .position(|(a, b)| a.to_bits() != b.to_bits())
        .map(|i| Mismatch {
            cell: unflatten(i, depth, g),
            expected: expected[i],
            actual: actual[i],
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub check: &'static str,
    pub case: usize,
    pub query_time: u64,
    pub mismatch: Option<Mismatch>,
    /// Timestamps of the failing cell's events, oldest first.
    pub cell_history: Vec<u64>,
    pub detail: String,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} failed on case {} at t={} us",
            self.check, self.case, self.query_time
        )?;
        if let Some(m) = &self.mismatch {
            let (c, k, y, x) = m.cell;
            write!(
                f,
                "; cell channel={c} k={} y={y} x={x}: expected {:?}, got {:?}",
                k + 1,
                m.expected,
                m.actual
            )?;
        }
        if !self.detail.is_empty() {
            write!(f, "; {}", self.detail)?;
        }
        if !self.cell_history.is_empty() {
            write!(f, "; cell history {:?}", self.cell_history)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failure: Option<Counterexample>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        for c in &self.checks {
            match &c.failure {
                None => writeln!(f, "PASS {} ({} cases)", c.name, c.cases)?,
                Some(cx) => writeln!(f, "FAIL {}: {cx}", c.name)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub cases: usize,
    pub width: u16,
    pub height: u16,
    pub events: usize,
    pub depths: [usize; 3],
    /// Render one microsecond late, to prove the harness catches faults.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            cases: 10,
            width: 32,
            height: 32,
            events: 20_000,
            depths: [1, 4, 7],
            inject_fault: false,
        }
    }
}

/// Bounds `[ln tau', ln tau]` for every value.
pub fn check_bounds(data: &[f64], config: &ToreConfig) -> Option<usize> {
    let (hi, lo) = (config.ln_tau(), config.ln_tau_prime());
    data.iter().position(|&v| !(lo..=hi).contains(&v))
}

/// Values non-decreasing in `k` within every cell; returns the flat index
/// of the first `k + 1` slot that drops.
pub fn check_k_monotone(data: &[f64], depth: usize, plane: usize) -> Option<usize> {
    for channel in 0..2 {
        for k in 0..depth.saturating_sub(1) {
            let base = (channel * depth + k) * plane;
            for pix in 0..plane {
                if data[base + pix] > data[base + plane + pix] {
                    return Some(base + plane + pix);
                }
            }
        }
    }
    None
}

/// Every value at `later` is at least the value at `earlier`.
pub fn check_t_monotone(earlier: &[f64], later: &[f64]) -> Option<usize> {
    earlier.iter().zip(later).position(|(a, b)| a > b)
}

fn cell_history(stream: &EventStream, cell: (usize, usize, usize, usize)) -> Vec<u64> {
    let (c, _, y, x) = cell;
    stream
        .events()
        .iter()
        .filter(|e| e.p.channel() == c && e.x as usize == x && e.y as usize == y)
        .map(|e| e.t)
        .collect()
}

pub fn run_verification(opts: &VerifyOptions) -> Result<VerifyReport> {
    let geometry = SensorGeometry::new(opts.width, opts.height)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let names = [
        "oracle-equivalence",
        "time-shift-invariance",
        "value-bounds",
        "k-monotonicity",
        "t-monotonicity",
    ];
    let mut failures: [Option<Counterexample>; 5] = Default::default();
    let plane = geometry.pixel_count();

    for case in 0..opts.cases {
        let depth = opts.depths[case % opts.depths.len()];
        let config = ToreConfig::with_depth(depth);
        let start = rng.gen_range(0..1_000_000);
        let stream = random_stream(&mut rng, geometry, opts.events, start, 50);
        let last = stream.last_time().unwrap_or(0);
        // alternate queries near the stream end with ones far enough out to hit the tau clamp
        let reach = if case % 2 == 0 { 10_000 } else { 2 * config.tau_us };
        let t = last + rng.gen_range(0..=reach);
        let t_later = t + rng.gen_range(1..=config.tau_us);
        let delta = rng.gen_range(0..=1_000_000_000);

        let mut state = SensorState::new(geometry, config)?;
        state.ingest(&stream)?;
        let render_at = |s: &SensorState, at: u64| render_volume(s, if opts.inject_fault { at + 1 } else { at });
        let volume = render_at(&state, t)?;
        let fail = |check: &'static str, mismatch: Option<Mismatch>, detail: String| {
            let cell_history = mismatch
                .as_ref()
                .map(|m| cell_history(&stream, m.cell))
                .unwrap_or_default();
            Counterexample {
                check,
                case,
                query_time: t,
                mismatch,
                cell_history,
                detail,
            }
        };

        if failures[0].is_none() {
            let expected = oracle_volume(stream.events(), geometry, &config, t);
            if let Some(m) = first_mismatch(&expected, volume.data(), depth, geometry) {
                failures[0] = Some(fail(names[0], Some(m), format!("K={depth}")));
            }
        }
        if failures[1].is_none() {
            let shifted = shift_stream(&stream, delta);
            let mut s2 = SensorState::new(geometry, config)?;
            s2.ingest(&shifted)?;
            let v2 = render_at(&s2, t + delta)?;
            if let Some(m) = first_mismatch(volume.data(), v2.data(), depth, geometry) {
                failures[1] = Some(fail(names[1], Some(m), format!("delta={delta} us")));
            }
        }
        if failures[2].is_none() {
            if let Some(i) = check_bounds(volume.data(), &config) {
                let cell = unflatten(i, depth, geometry);
                let v = volume.data()[i];
                failures[2] = Some(fail(
                    names[2],
                    Some(Mismatch {
                        cell,
                        expected: v.clamp(config.ln_tau_prime(), config.ln_tau()),
                        actual: v,
                    }),
                    String::new(),
                ));
            }
        }
        if failures[3].is_none() {
            if let Some(i) = check_k_monotone(volume.data(), depth, plane) {
                let cell = unflatten(i, depth, geometry);
                failures[3] = Some(fail(
                    names[3],
                    Some(Mismatch {
                        cell,
                        expected: volume.data()[i - plane],
                        actual: volume.data()[i],
                    }),
                    String::new(),
                ));
            }
        }
        if failures[4].is_none() {
            let later = render_at(&state, t_later)?;
            if let Some(i) = check_t_monotone(volume.data(), later.data()) {
                let cell = unflatten(i, depth, geometry);
                failures[4] = Some(fail(
                    names[4],
                    Some(Mismatch {
                        cell,
                        expected: volume.data()[i],
                        actual: later.data()[i],
                    }),
                    format!("later t={t_later} us"),
                ));
            }
        }
    }

    Ok(VerifyReport {
        seed: opts.seed,
        checks: names
            .iter()
            .zip(failures)
            .map(|(&name, failure)| CheckOutcome {
                name,
                cases: opts.cases,
                failure,
            })
            .collect(),
    })
}
