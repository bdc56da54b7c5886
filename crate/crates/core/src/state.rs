//! Live sensor state: per-pixel, per-polarity FIFO queues of the K most
//! recent event timestamps.
//!
//! Slots live in one flat array indexed `[channel][k][y][x]`, the same order
//! as a rendered volume, so rendering is a single linear pass. Within a cell
//! the slots are newest-first; an insert shifts them one step toward `k = K`
//! and drops the oldest.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity, SensorGeometry, TimestampPolicy, EMPTY_SLOT};

pub const DEFAULT_TAU_US: u64 = 5_000_000;
pub const DEFAULT_TAU_PRIME_US: u64 = 150;
pub const DEFAULT_DEPTH: usize = 4;

/// Largest state `new` will allocate, in slots (1 GiB of timestamps).
pub const DEFAULT_CELL_BUDGET: u64 = 1 << 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToreConfig {
    /// FIFO depth K.
    pub depth: usize,
    /// Maximum memory retention in microseconds.
    pub tau_us: u64,
    /// Minimum time sensitivity in microseconds.
    pub tau_prime_us: u64,
    pub policy: TimestampPolicy,
}

impl Default for ToreConfig {
    fn default() -> Self {
        ToreConfig {
            depth: DEFAULT_DEPTH,
            tau_us: DEFAULT_TAU_US,
            tau_prime_us: DEFAULT_TAU_PRIME_US,
            policy: TimestampPolicy::Reject,
        }
    }
}

impl ToreConfig {
    pub fn with_depth(depth: usize) -> Self {
        ToreConfig {
            depth,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidConfig("FIFO depth must be at least 1".into()));
        }
        if self.depth > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!("FIFO depth {} too large", self.depth)));
        }
        if self.tau_prime_us == 0 {
            return Err(Error::InvalidConfig("tau' must be at least 1 us".into()));
        }
        if self.tau_prime_us >= self.tau_us {
            return Err(Error::InvalidConfig(format!(
                "tau' ({} us) must be below tau ({} us)",
                self.tau_prime_us, self.tau_us
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn ln_tau(&self) -> f64 {
        (self.tau_us as f64).ln()
    }

    #[inline]
    pub fn ln_tau_prime(&self) -> f64 {
        (self.tau_prime_us as f64).ln()
    }
}

/// Throughput side report from [`SensorState::ingest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestStats {
    pub events: usize,
    pub elapsed: Duration,
}

impl IngestStats {
    pub fn events_per_sec(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs > 0.0 {
            self.events as f64 / secs
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorState {
    geometry: SensorGeometry,
    config: ToreConfig,
    slots: Vec<u64>,
    last_event_time: Option<u64>,
}

impl SensorState {
    pub fn new(geometry: SensorGeometry, config: ToreConfig) -> Result<Self> {
        Self::with_budget(geometry, config, DEFAULT_CELL_BUDGET)
    }

    pub fn with_budget(geometry: SensorGeometry, config: ToreConfig, budget: u64) -> Result<Self> {
        config.validate()?;
        let cells = slot_count(geometry, config.depth);
        if cells > budget {
            return Err(Error::AllocationTooLarge { cells, budget });
        }
        Ok(SensorState {
            geometry,
            config,
            slots: vec![EMPTY_SLOT; cells as usize],
            last_event_time: None,
        })
    }

    /// Rebuilds a state from raw parts, checking the per-cell ordering invariant.
    pub fn from_parts(
        geometry: SensorGeometry,
        config: ToreConfig,
        slots: Vec<u64>,
        last_event_time: Option<u64>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = slot_count(geometry, config.depth);
        if slots.len() as u64 != expected {
            return Err(Error::InvalidConfig(format!(
                "slot array holds {} values, geometry and depth need {expected}",
                slots.len()
            )));
        }
        let state = SensorState {
            geometry,
            config,
            slots,
            last_event_time,
        };
        if let Some((x, y, p)) = state.first_disordered_cell() {
            return Err(Error::InvalidConfig(format!(
                "cell ({x}, {y}, {p:?}) is not ordered newest-first"
            )));
        }
        Ok(state)
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn config(&self) -> &ToreConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn last_event_time(&self) -> Option<u64> {
        self.last_event_time
    }

    /// Raw slots in `[channel][k][y][x]` order; `EMPTY_SLOT` marks empty.
    pub fn slots(&self) -> &[u64] {
        &self.slots
    }

    /// Stride between consecutive k for one cell.
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.geometry.pixel_count()
    }

    #[inline]
    fn base_index(&self, x: u16, y: u16, p: Polarity) -> usize {
        p.channel() * self.config.depth * self.plane_len() + self.geometry.pixel_index(x, y)
    }

    pub fn insert(&mut self, e: Event) -> Result<()> {
        self.geometry.check(e.x, e.y)?;
        if e.t == EMPTY_SLOT {
            return Err(Error::ReservedTimestamp(e.t));
        }
        let t = self.config.policy.admit(self.last_event_time, e.t)?;
        self.push_unchecked(e.x, e.y, e.p, t);
        self.last_event_time = Some(t);
        Ok(())
    }

    #[inline]
    fn push_unchecked(&mut self, x: u16, y: u16, p: Polarity, t: u64) {
        let plane = self.plane_len();
        let base = self.base_index(x, y, p);
        let depth = self.config.depth;
        for k in (1..depth).rev() {
            self.slots[base + k * plane] = self.slots[base + (k - 1) * plane];
        }
        self.slots[base] = t;
    }

    /// Folds [`insert`](Self::insert) over the stream. On error the events
    /// before the offending one stay applied.
    pub fn ingest(&mut self, stream: &EventStream) -> Result<IngestStats> {
        let sg = stream.geometry();
        if sg != self.geometry {
            return Err(Error::GeometryMismatch {
                stream: (sg.width(), sg.height()),
                state: (self.geometry.width(), self.geometry.height()),
            });
        }
        self.ingest_events(stream.events())
    }

    pub fn ingest_events(&mut self, events: &[Event]) -> Result<IngestStats> {
        let start = Instant::now();
        for (index, e) in events.iter().enumerate() {
            self.insert(*e).map_err(|err| Error::at_event(index, err))?;
        }
        Ok(IngestStats {
            events: events.len(),
            elapsed: start.elapsed(),
        })
    }

    /// The K slots of one cell, newest first; `None` is an empty slot.
    pub fn snapshot_cell(&self, x: u16, y: u16, p: Polarity) -> Result<Vec<Option<u64>>> {
        self.geometry.check(x, y)?;
        let plane = self.plane_len();
        let base = self.base_index(x, y, p);
        Ok((0..self.config.depth)
            .map(|k| match self.slots[base + k * plane] {
                EMPTY_SLOT => None,
                t => Some(t),
            })
            .collect())
    }

    /// Slot value at `(channel, k, y, x)` with zero-based `k`.
    #[inline]
    pub fn slot(&self, channel: usize, k: usize, y: u16, x: u16) -> u64 {
        let plane = self.plane_len();
        self.slots[(channel * self.config.depth + k) * plane + self.geometry.pixel_index(x, y)]
    }

    fn first_disordered_cell(&self) -> Option<(u16, u16, Polarity)> {
        for p in [Polarity::On, Polarity::Off] {
            for y in 0..self.geometry.height() {
                for x in 0..self.geometry.width() {
                    let cell = self.snapshot_cell(x, y, p).expect("in bounds");
                    if !cell_is_ordered(&cell) {
                        return Some((x, y, p));
                    }
                }
            }
        }
        None
    }
}

fn slot_count(geometry: SensorGeometry, depth: usize) -> u64 {
    (Polarity::CHANNELS as u64)
        .saturating_mul(depth as u64)
        .saturating_mul(geometry.pixel_count() as u64)
}

/// Newest-first with all empties trailing.
pub fn cell_is_ordered(cell: &[Option<u64>]) -> bool {
    let filled = cell.iter().take_while(|s| s.is_some()).count();
    cell[filled..].iter().all(Option::is_none) && cell[..filled].windows(2).all(|w| w[0] >= w[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{validate_stream, TimestampPolicy};
    use proptest::prelude::*;

    fn geo(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    fn on(x: u16, y: u16, t: u64) -> Event {
        Event::new(x, y, t, Polarity::On)
    }

    #[test]
    fn fresh_state_sizes() {
        let s = SensorState::new(geo(2, 2), ToreConfig::with_depth(3)).unwrap();
        assert_eq!(s.slots().len(), 24);
        assert!(s.slots().iter().all(|&v| v == EMPTY_SLOT));
        assert_eq!(s.last_event_time(), None);

        let s = SensorState::new(geo(1, 1), ToreConfig::with_depth(1)).unwrap();
        assert_eq!(s.slots().len(), 2);

        let s = SensorState::new(geo(346, 260), ToreConfig::with_depth(7)).unwrap();
        assert_eq!(s.slots().len(), 1_259_440);
    }

    #[test]
    fn budget_is_enforced() {
        let err = SensorState::with_budget(geo(4, 4), ToreConfig::with_depth(2), 63).unwrap_err();
        assert!(matches!(err, Error::AllocationTooLarge { cells: 64, budget: 63 }));
    }

    #[test]
    fn config_validation() {
        assert!(SensorState::new(geo(1, 1), ToreConfig::with_depth(0)).is_err());
        let bad = ToreConfig {
            tau_prime_us: 10,
            tau_us: 10,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ToreConfig {
            tau_prime_us: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn insert_shifts_and_discards_oldest() {
        let mut s = SensorState::new(geo(4, 4), ToreConfig::with_depth(2)).unwrap();
        s.insert(on(1, 1, 10)).unwrap();
        s.insert(on(1, 1, 20)).unwrap();
        assert_eq!(s.snapshot_cell(1, 1, Polarity::On).unwrap(), vec![Some(20), Some(10)]);
        s.insert(on(1, 1, 30)).unwrap();
        assert_eq!(s.snapshot_cell(1, 1, Polarity::On).unwrap(), vec![Some(30), Some(20)]);
        assert_eq!(s.last_event_time(), Some(30));
    }

    #[test]
    fn insert_out_of_bounds() {
        let mut s = SensorState::new(geo(4, 4), ToreConfig::with_depth(2)).unwrap();
        assert!(matches!(
            s.insert(on(5, 0, 1)),
            Err(Error::OutOfBoundsEvent { x: 5, y: 0, .. })
        ));
    }

    #[test]
    fn insert_respects_policy() {
        let mut s = SensorState::new(geo(1, 1), ToreConfig::with_depth(2)).unwrap();
        s.insert(on(0, 0, 20)).unwrap();
        assert!(matches!(
            s.insert(on(0, 0, 10)),
            Err(Error::NonMonotonicTimestamp { previous: 20, t: 10 })
        ));

        let cfg = ToreConfig {
            policy: TimestampPolicy::Clamp,
            ..ToreConfig::with_depth(2)
        };
        let mut s = SensorState::new(geo(1, 1), cfg).unwrap();
        s.insert(on(0, 0, 20)).unwrap();
        s.insert(on(0, 0, 10)).unwrap();
        assert_eq!(s.snapshot_cell(0, 0, Polarity::On).unwrap(), vec![Some(20), Some(20)]);
    }

    #[test]
    fn equal_timestamps_are_both_kept() {
        let mut s = SensorState::new(geo(1, 1), ToreConfig::with_depth(3)).unwrap();
        s.insert(on(0, 0, 7)).unwrap();
        s.insert(on(0, 0, 7)).unwrap();
        assert_eq!(
            s.snapshot_cell(0, 0, Polarity::On).unwrap(),
            vec![Some(7), Some(7), None]
        );
    }

    #[test]
    fn snapshot_examples() {
        let k = 5;
        let mut s = SensorState::new(geo(3, 3), ToreConfig::with_depth(k)).unwrap();
        assert_eq!(s.snapshot_cell(2, 2, Polarity::Off).unwrap(), vec![None; k]);
        s.insert(Event::new(2, 2, 42, Polarity::Off)).unwrap();
        let mut expected = vec![None; k];
        expected[0] = Some(42);
        assert_eq!(s.snapshot_cell(2, 2, Polarity::Off).unwrap(), expected);

        let mut s = SensorState::new(geo(3, 3), ToreConfig::with_depth(k)).unwrap();
        for t in 1..=(k as u64 + 1) {
            s.insert(on(0, 2, t)).unwrap();
        }
        let expected: Vec<_> = (2..=k as u64 + 1).rev().map(Some).collect();
        assert_eq!(s.snapshot_cell(0, 2, Polarity::On).unwrap(), expected);
        assert!(s.snapshot_cell(3, 0, Polarity::On).is_err());
    }

    #[test]
    fn ingest_folds_inserts() {
        let g = geo(2, 2);
        let mut s = SensorState::new(g, ToreConfig::with_depth(2)).unwrap();
        let before = s.clone();
        s.ingest(&EventStream::empty(g)).unwrap();
        assert_eq!(s, before);

        let stream = validate_stream(vec![on(1, 0, 1), on(1, 0, 2), on(1, 0, 3)], g, TimestampPolicy::Reject).unwrap();
        let stats = s.ingest(&stream).unwrap();
        assert_eq!(stats.events, 3);
        assert_eq!(s.snapshot_cell(1, 0, Polarity::On).unwrap(), vec![Some(3), Some(2)]);
    }

    #[test]
    fn ingest_reports_offending_index() {
        let mut s = SensorState::new(geo(2, 2), ToreConfig::with_depth(2)).unwrap();
        let err = s.ingest_events(&[on(0, 0, 5), on(0, 0, 4)]).unwrap_err();
        assert!(matches!(err, Error::AtEvent { index: 1, .. }));
    }

    #[test]
    fn ingest_rejects_foreign_geometry() {
        let mut s = SensorState::new(geo(2, 2), ToreConfig::with_depth(2)).unwrap();
        assert!(matches!(
            s.ingest(&EventStream::empty(geo(3, 2))),
            Err(Error::GeometryMismatch { .. })
        ));
    }

    #[test]
    fn from_parts_checks_ordering() {
        let g = geo(1, 1);
        let cfg = ToreConfig::with_depth(2);
        assert!(SensorState::from_parts(g, cfg, vec![5, 9, EMPTY_SLOT, EMPTY_SLOT], None).is_err());
        assert!(SensorState::from_parts(g, cfg, vec![EMPTY_SLOT, 9, 1, 1], None).is_err());
        assert!(SensorState::from_parts(g, cfg, vec![9, 5, 3, EMPTY_SLOT], Some(9)).is_ok());
        assert!(SensorState::from_parts(g, cfg, vec![9, 5], Some(9)).is_err());
    }

    fn arb_stream() -> impl Strategy<Value = Vec<(u16, u16, u64, bool)>> {
        prop::collection::vec((0u16..3, 0u16..3, 0u64..5, any::<bool>()), 0..120)
    }

    fn build(raw: &[(u16, u16, u64, bool)]) -> Vec<Event> {
        let mut t = 0;
        raw.iter()
            .map(|&(x, y, dt, p)| {
                t += dt;
                Event::new(x, y, t, Polarity::from_sign(p))
            })
            .collect()
    }

    proptest! {
        #[test]
        fn insert_touches_exactly_one_cell(raw in arb_stream(), k in 1usize..5) {
            let events = build(&raw);
            let mut s = SensorState::new(geo(3, 3), ToreConfig::with_depth(k)).unwrap();
            for e in events {
                let before = s.clone();
                s.insert(e).unwrap();
                for p in [Polarity::On, Polarity::Off] {
                    for y in 0..3 {
                        for x in 0..3 {
                            let changed = before.snapshot_cell(x, y, p).unwrap()
                                != s.snapshot_cell(x, y, p).unwrap();
                            if (x, y, p) != (e.x, e.y, e.p) {
                                prop_assert!(!changed);
                            }
                        }
                    }
                }
                prop_assert_eq!(s.snapshot_cell(e.x, e.y, e.p).unwrap()[0], Some(e.t));
            }
        }

        #[test]
        fn cells_stay_newest_first(raw in arb_stream(), k in 1usize..5) {
            let mut s = SensorState::new(geo(3, 3), ToreConfig::with_depth(k)).unwrap();
            s.ingest_events(&build(&raw)).unwrap();
            prop_assert!(s.first_disordered_cell().is_none());
        }

        #[test]
        fn disjoint_streams_commute(raw in arb_stream(), k in 1usize..4) {
            // left half x < 2 and right half x >= 2 of a 4-wide sensor
            let g = geo(4, 3);
            let events: Vec<Event> = build(&raw)
                .into_iter()
                .enumerate()
                .map(|(i, mut e)| { e.x %= 2; if i % 2 == 1 { e.x += 2; } e })
                .collect();
            let mut together = SensorState::new(g, ToreConfig::with_depth(k)).unwrap();
            together.ingest_events(&events).unwrap();

            let (left, right): (Vec<Event>, Vec<Event>) = events.iter().partition(|e| e.x < 2);
            let mut a = SensorState::new(g, ToreConfig::with_depth(k)).unwrap();
            let mut b = a.clone();
            a.ingest_events(&left).unwrap();
            b.ingest_events(&right).unwrap();
            for p in [Polarity::On, Polarity::Off] {
                for y in 0..3 {
                    for x in 0..4 {
                        let src = if x < 2 { &a } else { &b };
                        prop_assert_eq!(
                            together.snapshot_cell(x, y, p).unwrap(),
                            src.snapshot_cell(x, y, p).unwrap()
                        );
                    }
                }
            }
        }
    }
}
