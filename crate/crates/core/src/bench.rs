//! Timing harness for ingestion, rendering and the windowed baselines.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{event_count, event_frame, sae, voxel_grid, WindowSpec};
use crate::error::Result;
use crate::event::{EventStream, SensorGeometry};
use crate::render::render_volume;
use crate::state::{SensorState, ToreConfig};
use crate::verify::random_stream;

/// Ingestion rate the real-time claim is checked against, events per second.
pub const THROUGHPUT_TARGET: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub case: String,
    pub param: String,
    pub median: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub geometry: SensorGeometry,
    pub events: usize,
    pub reps: usize,
    /// FIFO depth for the ingestion case.
    pub ingest_depth: usize,
    pub depth_sweep: Vec<usize>,
    pub seed: u64,
    pub window_us: u64,
    pub bins: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            geometry: SensorGeometry::new(346, 260).expect("valid"),
            events: 1_000_000,
            reps: 5,
            ingest_depth: 7,
            depth_sweep: vec![1, 4, 7, 16],
            seed: 0,
            window_us: 50_000,
            bins: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,param,median,p95\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.case, r.param, r.median, r.p95);
        }
        out
    }

    pub fn row(&self, case: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.case == case)
    }

    /// Median ingestion throughput, if measured.
    pub fn ingest_rate(&self) -> Option<f64> {
        self.row("ingest_events_per_sec").map(|r| r.median)
    }
}

/// `(median, p95)` using nearest-rank percentiles.
pub fn summarize(samples: &mut [f64]) -> (f64, f64) {
    assert!(!samples.is_empty(), "no samples");
    samples.sort_by(f64::total_cmp);
    let rank = |q: f64| {
        let r = (q * samples.len() as f64).ceil() as usize;
        samples[r.clamp(1, samples.len()) - 1]
    };
    (rank(0.5), rank(0.95))
}

pub fn synthetic_stream(geometry: SensorGeometry, events: usize, seed: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_stream(&mut rng, geometry, events, 0, 2)
}

fn time_ms<F: FnMut()>(reps: usize, mut f: F) -> (f64, f64) {
    let mut samples: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    summarize(&mut samples)
}

pub fn run_bench(opts: &BenchOptions, input: Option<&EventStream>) -> Result<BenchReport> {
    let generated;
    let stream = match input {
        Some(s) => s,
        None => {
            generated = synthetic_stream(opts.geometry, opts.events, opts.seed);
            &generated
        }
    };
    let g = stream.geometry();
    let reps = opts.reps.max(1);
    let mut rows = Vec::new();

    let ingest_cfg = ToreConfig::with_depth(opts.ingest_depth);
    let mut rates = Vec::with_capacity(reps);
    let mut final_state = None;
    for _ in 0..reps {
        let mut state = SensorState::new(g, ingest_cfg)?;
        let stats = state.ingest(stream)?;
        rates.push(stats.events_per_sec());
        final_state = Some(state);
    }
    let (median, p95) = summarize(&mut rates);
    rows.push(BenchRow {
        case: "ingest_events_per_sec".into(),
        param: format!("K={} {g} n={}", opts.ingest_depth, stream.len()),
        median,
        p95,
    });

    let t_query = stream.last_time().unwrap_or(0);
    for &depth in &opts.depth_sweep {
        let mut state = SensorState::new(g, ToreConfig::with_depth(depth))?;
        state.ingest(stream)?;
        let (median, p95) = time_ms(reps, || {
            std::hint::black_box(render_volume(&state, t_query).expect("causal query"));
        });
        rows.push(BenchRow {
            case: "render_ms".into(),
            param: format!("K={depth} {g}"),
            median,
            p95,
        });
    }
    drop(final_state);

    let end = t_query.max(opts.window_us);
    let window = WindowSpec::new(end, opts.window_us)?;
    let param = format!("window={}us {g}", opts.window_us);
    let mut push = |case: &str, (median, p95): (f64, f64)| {
        rows.push(BenchRow {
            case: case.into(),
            param: param.clone(),
            median,
            p95,
        })
    };
    push(
        "event_frame_ms",
        time_ms(reps, || {
            std::hint::black_box(event_frame(stream, window));
        }),
    );
    push(
        "event_count_ms",
        time_ms(reps, || {
            std::hint::black_box(event_count(stream, window));
        }),
    );
    push(
        "sae_ms",
        time_ms(reps, || {
            std::hint::black_box(sae(stream, end));
        }),
    );
    let bins = opts.bins;
    let mut voxel = Vec::new();
    for _ in 0..reps {
        let start = Instant::now();
        std::hint::black_box(voxel_grid(stream, window, bins)?);
        voxel.push(start.elapsed().as_secs_f64() * 1e3);
    }
    push("voxel_grid_ms", summarize(&mut voxel));

    Ok(BenchReport { rows })
}
