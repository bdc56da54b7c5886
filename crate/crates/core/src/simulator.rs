//! Threshold-crossing event generation from analytic log-intensity signals.
//!
//! Each pixel keeps a reference level `R`, initialised to the signal at
//! `t_start`. An event fires at the earliest time where `|J(t) - R| >= eps`,
//! with polarity `sign(J - R)`; the time is rounded up to the timestamp grid
//! and `R` is reset to `J` at that tick. Crossing times are solved in closed
//! form for each signal kind.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::{validate_stream, Event, EventStream, Polarity, SensorGeometry, TimestampPolicy};

/// Relative slack, in ticks, when deciding whether a crossing lands on a tick.
/// Absorbs representation error in quotients such as `0.1 / 0.001`.
const TICK_SNAP: f64 = 1e-9;
/// Relative slack when confirming the threshold at the reported tick.
const THRESHOLD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    LinearRamp,
    Sinusoid,
    StepTrain,
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" | "linear_ramp" => Ok(SignalKind::LinearRamp),
            "sinusoid" | "sine" => Ok(SignalKind::Sinusoid),
            "steps" | "step_train" => Ok(SignalKind::StepTrain),
            other => Err(Error::UnsupportedSignal(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t: u64,
    pub height: f64,
}

/// Log-intensity `J(t)` of one pixel, `t` in microseconds.
#[derive(Debug, Clone, PartialEq)]
pub enum IntensitySignal {
    /// `offset + slope * t`
    LinearRamp { offset: f64, slope: f64 },
    /// `offset + amplitude * sin(2 pi t / period_us + phase)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        period_us: f64,
        phase: f64,
    },
    /// `base` plus the heights of every step with `step.t <= t`.
    StepTrain { base: f64, steps: Vec<Step> },
}

impl IntensitySignal {
    pub fn constant(value: f64) -> Self {
        IntensitySignal::LinearRamp {
            offset: value,
            slope: 0.0,
        }
    }

    pub fn ramp(slope: f64) -> Self {
        IntensitySignal::LinearRamp { offset: 0.0, slope }
    }

    pub fn step_train(base: f64, mut steps: Vec<Step>) -> Self {
        steps.sort_by_key(|s| s.t);
        IntensitySignal::StepTrain { base, steps }
    }

    pub fn kind(&self) -> SignalKind {
        match self {
            IntensitySignal::LinearRamp { .. } => SignalKind::LinearRamp,
            IntensitySignal::Sinusoid { .. } => SignalKind::Sinusoid,
            IntensitySignal::StepTrain { .. } => SignalKind::StepTrain,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match self {
            IntensitySignal::LinearRamp { offset, slope } => offset.is_finite() && slope.is_finite(),
            IntensitySignal::Sinusoid {
                offset,
                amplitude,
                period_us,
                phase,
            } => {
                if period_us.is_nan() || *period_us <= 0.0 {
                    return Err(Error::InvalidConfig("sinusoid period must be positive".into()));
                }
                offset.is_finite() && amplitude.is_finite() && period_us.is_finite() && phase.is_finite()
            }
            IntensitySignal::StepTrain { base, steps } => {
                if steps.windows(2).any(|w| w[1].t < w[0].t) {
                    return Err(Error::InvalidConfig("step times must be sorted".into()));
                }
                base.is_finite() && steps.iter().all(|s| s.height.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidConfig("signal parameters must be finite".into()))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            IntensitySignal::LinearRamp { offset, slope } => offset + slope * t,
            IntensitySignal::Sinusoid {
                offset,
                amplitude,
                period_us,
                phase,
            } => offset + amplitude * (2.0 * PI * t / period_us + phase).sin(),
            IntensitySignal::StepTrain { base, steps } => {
                base + steps
                    .iter()
                    .take_while(|s| s.t as f64 <= t)
                    .map(|s| s.height)
                    .sum::<f64>()
            }
        }
    }

    /// Earliest continuous time strictly after `from` where the signal
    /// leaves the open band `(reference - eps, reference + eps)`. `J(from)`
    /// is assumed to lie inside the band.
    fn next_crossing(&self, from: f64, reference: f64, eps: f64) -> Option<f64> {
        match self {
            IntensitySignal::LinearRamp { slope, .. } => {
                if *slope == 0.0 {
                    return None;
                }
                let drift = self.value(from) - reference;
                let remaining = if *slope > 0.0 { eps - drift } else { eps + drift };
                Some(from + remaining.max(0.0) / slope.abs())
            }
            IntensitySignal::Sinusoid {
                offset,
                amplitude,
                period_us,
                phase,
            } => {
                if *amplitude == 0.0 {
                    return None;
                }
                let omega = 2.0 * PI / period_us;
                let theta_from = omega * from + phase;
                [reference + eps, reference - eps]
                    .into_iter()
                    .filter_map(|level| {
                        let mut c = (level - offset) / amplitude;
                        // crest and trough levels reached only up to rounding
                        if c.abs() > 1.0 && c.abs() <= 1.0 + 1e-12 {
                            c = c.signum();
                        }
                        (c.abs() <= 1.0).then(|| {
                            let alpha = c.asin();
                            [alpha, PI - alpha]
                                .into_iter()
                                .map(|base| first_angle_after(base, theta_from))
                                .fold(f64::INFINITY, f64::min)
                        })
                    })
                    .fold(None, |best: Option<f64>, theta| {
                        Some(best.map_or(theta, |b| b.min(theta)))
                    })
                    .map(|theta| (theta - phase) / omega)
            }
            IntensitySignal::StepTrain { base, steps } => {
                let mut level = *base;
                for s in steps {
                    level += s.height;
                    if (s.t as f64) <= from {
                        continue;
                    }
                    if (level - reference).abs() >= eps {
                        return Some(s.t as f64);
                    }
                }
                None
            }
        }
    }
}

/// Smallest `base + 2 pi n` strictly greater than `from`.
fn first_angle_after(base: f64, from: f64) -> f64 {
    let turn = 2.0 * PI;
    let mut theta = base + turn * ((from - base) / turn).ceil();
    if theta <= from {
        theta += turn;
    }
    theta
}

/// Signals for every pixel of the sensor.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalField {
    Uniform(IntensitySignal),
    /// Row-major, one signal per pixel.
    PerPixel(Vec<IntensitySignal>),
}

/// Additive uniform noise events, for robustness tests only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseConfig {
    pub events: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Contrast threshold in log-intensity units.
    pub epsilon: f64,
    pub t_start: u64,
    pub t_end: u64,
    pub geometry: SensorGeometry,
    /// Timestamp quantum in microseconds.
    pub tick_us: u64,
    pub noise: Option<NoiseConfig>,
}

impl SimConfig {
    pub fn new(epsilon: f64, t_start: u64, t_end: u64, geometry: SensorGeometry) -> Self {
        SimConfig {
            epsilon,
            t_start,
            t_end,
            geometry,
            tick_us: 1,
            noise: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "contrast threshold must be a positive number, got {}",
                self.epsilon
            )));
        }
        if self.t_start >= self.t_end {
            return Err(Error::InvalidConfig(format!(
                "simulation interval [{}, {}] is empty",
                self.t_start, self.t_end
            )));
        }
        if self.tick_us == 0 {
            return Err(Error::InvalidConfig("tick must be at least 1 us".into()));
        }
        Ok(())
    }

    /// Smallest grid tick `>= t`, treating values within snap slack as on-grid.
    fn tick_at_or_after(&self, t: f64) -> u64 {
        let q = t / self.tick_us as f64;
        let n = (q - TICK_SNAP * q.abs().max(1.0)).ceil().max(0.0);
        n as u64 * self.tick_us
    }

    fn tick_after(&self, t: u64) -> u64 {
        (t / self.tick_us + 1) * self.tick_us
    }
}

/// Event times and polarities for one pixel.
pub fn simulate_pixel(signal: &IntensitySignal, config: &SimConfig) -> Vec<(u64, Polarity)> {
    let eps = config.epsilon;
    let mut out = Vec::new();
    let mut from = config.t_start;
    let mut reference = signal.value(config.t_start as f64);
    while let Some(crossing) = signal.next_crossing(from as f64, reference, eps) {
        let mut tick = config.tick_at_or_after(crossing);
        if tick <= from {
            tick = config.tick_after(from);
        }
        if tick > config.t_end {
            break;
        }
        let level = signal.value(tick as f64);
        let delta = level - reference;
        if delta.abs() >= eps * (1.0 - THRESHOLD_SLACK) {
            out.push((tick, Polarity::from_sign(delta > 0.0)));
            reference = level;
        }
        // otherwise the excursion fell back inside the band before the tick
        from = tick;
    }
    out
}

pub fn simulate(field: &SignalField, config: &SimConfig) -> Result<EventStream> {
    config.validate()?;
    let geometry = config.geometry;
    let width = geometry.width() as usize;

    let mut events: Vec<Event> = match field {
        SignalField::Uniform(signal) => {
            signal.validate()?;
            let trace = simulate_pixel(signal, config);
            let mut events = Vec::with_capacity(trace.len() * geometry.pixel_count());
            for &(t, p) in &trace {
                for y in 0..geometry.height() {
                    for x in 0..geometry.width() {
                        events.push(Event::new(x, y, t, p));
                    }
                }
            }
            events
        }
        SignalField::PerPixel(signals) => {
            if signals.len() != geometry.pixel_count() {
                return Err(Error::InvalidConfig(format!(
                    "{} signals for {} pixels",
                    signals.len(),
                    geometry.pixel_count()
                )));
            }
            signals.iter().try_for_each(IntensitySignal::validate)?;
            signals
                .par_iter()
                .enumerate()
                .flat_map_iter(|(i, signal)| {
                    let (x, y) = ((i % width) as u16, (i / width) as u16);
                    simulate_pixel(signal, config)
                        .into_iter()
                        .map(move |(t, p)| Event::new(x, y, t, p))
                })
                .collect()
        }
    };

    if let Some(noise) = config.noise {
        events.extend(noise_events(&noise, config));
    }
    events.sort_by_key(|e| (e.t, e.y, e.x, e.p));
    validate_stream(events, geometry, TimestampPolicy::Reject)
}

fn noise_events(noise: &NoiseConfig, config: &SimConfig) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let g = config.geometry;
    (0..noise.events)
        .map(|_| {
            let t = rng.gen_range(config.t_start + 1..=config.t_end);
            let t = config
                .tick_at_or_after(t as f64)
                .min(config.t_end / config.tick_us * config.tick_us);
            Event::new(
                rng.gen_range(0..g.width()),
                rng.gen_range(0..g.height()),
                t,
                Polarity::from_sign(rng.gen()),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_pixel(epsilon: f64, t_end: u64) -> SimConfig {
        SimConfig::new(epsilon, 0, t_end, SensorGeometry::new(1, 1).unwrap())
    }

    fn times(stream: &EventStream) -> Vec<u64> {
        stream.events().iter().map(|e| e.t).collect()
    }

    #[test]
    fn rising_ramp_closed_form() {
        let stream = simulate(
            &SignalField::Uniform(IntensitySignal::ramp(0.001)),
            &one_pixel(0.1, 1_000_000),
        )
        .unwrap();
        assert_eq!(stream.len(), 10_000);
        let expected: Vec<u64> = (1..=10_000).map(|i| 100 * i).collect();
        assert_eq!(times(&stream), expected);
        assert!(stream.events().iter().all(|e| e.p == Polarity::On));
    }

    #[test]
    fn falling_ramp_closed_form() {
        let stream = simulate(
            &SignalField::Uniform(IntensitySignal::ramp(-0.001)),
            &one_pixel(0.1, 1000),
        )
        .unwrap();
        assert_eq!(times(&stream), (1..=10).map(|i| 100 * i).collect::<Vec<_>>());
        assert!(stream.events().iter().all(|e| e.p == Polarity::Off));
    }

    #[test]
    fn constant_signal_is_silent() {
        let stream = simulate(
            &SignalField::Uniform(IntensitySignal::constant(3.0)),
            &one_pixel(0.1, 1_000_000),
        )
        .unwrap();
        assert!(stream.is_empty());
    }

    #[test]
    fn doubling_epsilon_halves_ramp_events() {
        let field = SignalField::Uniform(IntensitySignal::ramp(0.001));
        let n = simulate(&field, &one_pixel(0.2, 1_000_000)).unwrap().len();
        assert_eq!(n, 5_000);
    }

    #[test]
    fn coarse_ticks_round_up() {
        // crossings every 33.3 us land on the next 10 us tick, and the
        // reference resets there
        let mut cfg = one_pixel(0.1, 200);
        cfg.tick_us = 10;
        let stream = simulate(&SignalField::Uniform(IntensitySignal::ramp(0.003)), &cfg).unwrap();
        assert_eq!(times(&stream), vec![40, 80, 120, 160, 200]);
    }

    #[test]
    fn sinusoid_crossings_closed_form() {
        // sin starts at 0, eps = 0.5 amplitude: up-crossing at theta = pi/6
        let signal = IntensitySignal::Sinusoid {
            offset: 0.0,
            amplitude: 1.0,
            period_us: 1200.0,
            phase: 0.0,
        };
        let stream = simulate(&SignalField::Uniform(signal.clone()), &one_pixel(0.5, 1200)).unwrap();
        let ev = stream.events();
        // theta = pi/6 -> t = 100
        assert_eq!((ev[0].t, ev[0].p), (100, Polarity::On));
        // from J=0.5 the next level is 1.0, reached at the crest t = 300
        assert_eq!((ev[1].t, ev[1].p), (300, Polarity::On));
        // then 0.5 on the way down at t = 500, 0 at 600, ...
        assert_eq!((ev[2].t, ev[2].p), (500, Polarity::Off));
        assert_eq!((ev[3].t, ev[3].p), (600, Polarity::Off));
        for e in ev {
            assert!(e.t <= 1200);
        }
        let ts = times(&stream);
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn step_train_fires_on_large_jumps_only() {
        let signal = IntensitySignal::step_train(
            0.0,
            vec![
                Step { t: 50, height: 0.05 },
                Step { t: 70, height: 0.2 },
                Step { t: 90, height: -0.5 },
            ],
        );
        let stream = simulate(&SignalField::Uniform(signal), &one_pixel(0.1, 1000)).unwrap();
        let ev: Vec<_> = stream.events().iter().map(|e| (e.t, e.p)).collect();
        assert_eq!(ev, vec![(70, Polarity::On), (90, Polarity::Off)]);
    }

    #[test]
    fn per_pixel_merge_is_sorted() {
        let g = SensorGeometry::new(2, 1).unwrap();
        let field = SignalField::PerPixel(vec![IntensitySignal::ramp(0.01), IntensitySignal::ramp(-0.02)]);
        let stream = simulate(&field, &SimConfig::new(0.1, 0, 40, g)).unwrap();
        let ev: Vec<_> = stream.events().iter().map(|e| (e.t, e.x, e.p)).collect();
        assert_eq!(
            ev,
            vec![
                (5, 1, Polarity::Off),
                (10, 0, Polarity::On),
                (10, 1, Polarity::Off),
                (15, 1, Polarity::Off),
                (20, 0, Polarity::On),
                (20, 1, Polarity::Off),
                (25, 1, Polarity::Off),
                (30, 0, Polarity::On),
                (30, 1, Polarity::Off),
                (35, 1, Polarity::Off),
                (40, 0, Polarity::On),
                (40, 1, Polarity::Off),
            ]
        );
    }

    #[test]
    fn config_errors() {
        let field = SignalField::Uniform(IntensitySignal::ramp(1.0));
        assert!(simulate(&field, &one_pixel(0.0, 10)).is_err());
        assert!(simulate(&field, &one_pixel(-1.0, 10)).is_err());
        let mut cfg = one_pixel(0.1, 10);
        cfg.t_start = 10;
        assert!(simulate(&field, &cfg).is_err());
        assert!(matches!(
            "chirp".parse::<SignalKind>(),
            Err(Error::UnsupportedSignal(_))
        ));
    }

    #[test]
    fn noise_is_seeded() {
        let mut cfg = one_pixel(0.1, 1000);
        cfg.geometry = SensorGeometry::new(8, 8).unwrap();
        cfg.noise = Some(NoiseConfig { events: 50, seed: 3 });
        let field = SignalField::Uniform(IntensitySignal::constant(0.0));
        let a = simulate(&field, &cfg).unwrap();
        let b = simulate(&field, &cfg).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn ramp_count_matches_floor(period in 1u64..500, eps_milli in 1u32..1000, neg in any::<bool>(), t_end in 1u64..20_000) {
            // slope chosen so eps / |a| is a whole number of ticks
            let eps = eps_milli as f64 / 1000.0;
            let slope = if neg { -eps / period as f64 } else { eps / period as f64 };
            let stream = simulate(&SignalField::Uniform(IntensitySignal::ramp(slope)), &one_pixel(eps, t_end)).unwrap();
            prop_assert_eq!(stream.len() as u64, t_end / period);
            let want = if neg { Polarity::Off } else { Polarity::On };
            prop_assert!(stream.events().iter().all(|e| e.p == want));
        }

        #[test]
        fn ramp_count_with_tick_rounding(slope_micro in 1u64..10_000, eps_milli in 1u64..500) {
            // eps / slope = 1000 * eps_milli / slope_micro exactly; each gap is
            // that quotient rounded up to whole ticks
            let slope = slope_micro as f64 * 1e-6;
            let eps = eps_milli as f64 / 1000.0;
            let field = SignalField::Uniform(IntensitySignal::ramp(slope));
            let gap = (1000 * eps_milli).div_ceil(slope_micro);
            let n = simulate(&field, &one_pixel(eps, 100_000)).unwrap().len() as u64;
            prop_assert_eq!(n, 100_000 / gap);
        }

        #[test]
        fn doubling_eps_halves_aligned_ramps(period in 1u64..400, eps_milli in 1u32..500, t_end in 1u64..50_000) {
            let eps = eps_milli as f64 / 1000.0;
            let field = SignalField::Uniform(IntensitySignal::ramp(eps / period as f64));
            let n1 = simulate(&field, &one_pixel(eps, t_end)).unwrap().len() as i64;
            let n2 = simulate(&field, &one_pixel(2.0 * eps, t_end)).unwrap().len() as i64;
            prop_assert!((n1 - 2 * n2).abs() <= 1);
        }

        #[test]
        fn sinusoid_times_strictly_increase(amp in 0.1f64..3.0, period in 50f64..5000.0, phase in 0f64..6.0, eps in 0.05f64..1.0) {
            let signal = IntensitySignal::Sinusoid { offset: 0.0, amplitude: amp, period_us: period, phase };
            let trace = simulate_pixel(&signal, &one_pixel(eps, 20_000));
            prop_assert!(trace.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
