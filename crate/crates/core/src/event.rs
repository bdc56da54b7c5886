//! Events, sensor geometry and stream-level validation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Timestamp value reserved for empty FIFO slots; never a valid event time.
pub const EMPTY_SLOT: u64 = u64::MAX;

/// Sign of the log-intensity change behind an event.
///
/// Channel order is part of every tensor contract: `On` (+1) is channel 0,
/// `Off` (-1) is channel 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub const CHANNELS: usize = 2;

    #[inline]
    pub fn channel(self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }

    #[inline]
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_channel(channel: usize) -> Option<Self> {
        match channel {
            0 => Some(Polarity::On),
            1 => Some(Polarity::Off),
            _ => None,
        }
    }

    pub fn from_sign(positive: bool) -> Self {
        if positive {
            Polarity::On
        } else {
            Polarity::Off
        }
    }
}

/// How raw polarity integers are encoded in an external source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolarityConvention {
    /// -1 / +1
    Signed,
    /// 0 = off, 1 = on
    #[default]
    Binary,
}

impl PolarityConvention {
    pub fn name(self) -> &'static str {
        match self {
            PolarityConvention::Signed => "signed",
            PolarityConvention::Binary => "binary",
        }
    }
}

impl FromStr for PolarityConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(PolarityConvention::Signed),
            "binary" => Ok(PolarityConvention::Binary),
            other => Err(Error::InvalidConfig(format!(
                "unknown polarity convention `{other}` (expected signed or binary)"
            ))),
        }
    }
}

pub fn normalize_polarity(raw: i64, convention: PolarityConvention) -> Result<Polarity> {
    match (convention, raw) {
        (PolarityConvention::Binary, 0) | (PolarityConvention::Signed, -1) => Ok(Polarity::Off),
        (PolarityConvention::Binary, 1) | (PolarityConvention::Signed, 1) => Ok(Polarity::On),
        _ => Err(Error::InvalidPolarity {
            raw,
            convention: convention.name(),
        }),
    }
}

/// A single DVS spike. `t` is in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: Polarity) -> Self {
        Event { x, y, t, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    width: u16,
    height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGeometry {
                width: width.into(),
                height: height.into(),
            });
        }
        Ok(SensorGeometry { width, height })
    }

    #[inline]
    pub fn width(&self) -> u16 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u16 {
        self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    pub fn check(&self, x: u16, y: u16) -> Result<()> {
        if self.contains(x, y) {
            Ok(())
        } else {
            Err(Error::OutOfBoundsEvent {
                x: x.into(),
                y: y.into(),
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Row-major pixel index `y * W + x`.
    #[inline]
    pub fn pixel_index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for SensorGeometry {
    type Err = Error;

    /// Parses `WIDTHxHEIGHT`, e.g. `346x260`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("geometry `{s}` is not WIDTHxHEIGHT"));
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let w: u16 = w.trim().parse().map_err(|_| bad())?;
        let h: u16 = h.trim().parse().map_err(|_| bad())?;
        SensorGeometry::new(w, h)
    }
}

/// What to do with a timestamp that runs backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimestampPolicy {
    #[default]
    Reject,
    /// Raise the timestamp to its predecessor's value.
    Clamp,
}

impl TimestampPolicy {
    pub fn name(self) -> &'static str {
        match self {
            TimestampPolicy::Reject => "reject",
            TimestampPolicy::Clamp => "clamp",
        }
    }

    /// Applies the policy to `t` given the latest accepted timestamp.
    #[inline]
    pub fn admit(self, previous: Option<u64>, t: u64) -> Result<u64> {
        match previous {
            Some(prev) if t < prev => match self {
                TimestampPolicy::Reject => Err(Error::NonMonotonicTimestamp { previous: prev, t }),
                TimestampPolicy::Clamp => Ok(prev),
            },
            _ => Ok(t),
        }
    }
}

impl FromStr for TimestampPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" => Ok(TimestampPolicy::Reject),
            "clamp" => Ok(TimestampPolicy::Clamp),
            other => Err(Error::InvalidConfig(format!(
                "unknown timestamp policy `{other}` (expected reject or clamp)"
            ))),
        }
    }
}

/// A validated, time-ordered sequence of events bound to a sensor geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    pub fn empty(geometry: SensorGeometry) -> Self {
        EventStream {
            geometry,
            events: Vec::new(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn first_time(&self) -> Option<u64> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_time(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }

    /// Events with `t <= until`, relying on the stream being sorted.
    pub fn prefix_until(&self, until: u64) -> &[Event] {
        let end = self.events.partition_point(|e| e.t <= until);
        &self.events[..end]
    }
}

/// Checks bounds and timestamp order, returning a stream that satisfies
/// the stream invariants.
pub fn validate_stream(events: Vec<Event>, geometry: SensorGeometry, policy: TimestampPolicy) -> Result<EventStream> {
    let mut events = events;
    let mut previous = None;
    for (index, e) in events.iter_mut().enumerate() {
        geometry.check(e.x, e.y).map_err(|err| Error::at_event(index, err))?;
        if e.t == EMPTY_SLOT {
            return Err(Error::at_event(index, Error::ReservedTimestamp(e.t)));
        }
        e.t = policy.admit(previous, e.t).map_err(|err| Error::at_event(index, err))?;
        previous = Some(e.t);
    }
    Ok(EventStream { geometry, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(x: u16, y: u16, t: u64, p: i8) -> Event {
        Event::new(x, y, t, Polarity::from_sign(p > 0))
    }

    fn geo(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    #[test]
    fn sorted_stream_is_unchanged() {
        let events = vec![ev(0, 0, 10, 1), ev(1, 1, 20, -1)];
        let stream = validate_stream(events.clone(), geo(2, 2), TimestampPolicy::Reject).unwrap();
        assert_eq!(stream.events(), &events[..]);
    }

    #[test]
    fn reject_policy_refuses_backwards_time() {
        let events = vec![ev(0, 0, 20, 1), ev(0, 0, 10, 1)];
        let err = validate_stream(events, geo(2, 2), TimestampPolicy::Reject).unwrap_err();
        match err {
            Error::AtEvent { index, source } => {
                assert_eq!(index, 1);
                assert!(matches!(*source, Error::NonMonotonicTimestamp { previous: 20, t: 10 }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clamp_policy_raises_to_predecessor() {
        let events = vec![ev(0, 0, 20, 1), ev(0, 0, 10, 1)];
        let stream = validate_stream(events, geo(2, 2), TimestampPolicy::Clamp).unwrap();
        let times: Vec<u64> = stream.events().iter().map(|e| e.t).collect();
        assert_eq!(times, vec![20, 20]);
    }

    #[test]
    fn out_of_bounds_is_fatal_under_both_policies() {
        for policy in [TimestampPolicy::Reject, TimestampPolicy::Clamp] {
            let err = validate_stream(vec![ev(2, 0, 1, 1)], geo(2, 2), policy).unwrap_err();
            assert!(matches!(err.root(), Error::OutOfBoundsEvent { x: 2, .. }));
        }
    }

    #[test]
    fn reserved_timestamp_rejected() {
        let err = validate_stream(vec![ev(0, 0, EMPTY_SLOT, 1)], geo(1, 1), TimestampPolicy::Clamp).unwrap_err();
        assert!(matches!(err.root(), Error::ReservedTimestamp(_)));
    }

    #[test]
    fn polarity_conventions() {
        use PolarityConvention::*;
        assert_eq!(normalize_polarity(0, Binary).unwrap(), Polarity::Off);
        assert_eq!(normalize_polarity(1, Binary).unwrap(), Polarity::On);
        assert_eq!(normalize_polarity(-1, Signed).unwrap(), Polarity::Off);
        assert_eq!(normalize_polarity(1, Signed).unwrap(), Polarity::On);
        assert!(matches!(
            normalize_polarity(2, Binary),
            Err(Error::InvalidPolarity { raw: 2, .. })
        ));
        assert!(normalize_polarity(0, Signed).is_err());
        assert!(normalize_polarity(-1, Binary).is_err());
    }

    #[test]
    fn geometry_parsing() {
        let g: SensorGeometry = "346x260".parse().unwrap();
        assert_eq!((g.width(), g.height()), (346, 260));
        assert!("0x4".parse::<SensorGeometry>().is_err());
        assert!("12".parse::<SensorGeometry>().is_err());
    }

    fn arb_events() -> impl Strategy<Value = Vec<Event>> {
        prop::collection::vec((0u16..4, 0u16..4, 0u64..1000, any::<bool>()), 0..64).prop_map(|raw| {
            raw.into_iter()
                .map(|(x, y, t, p)| Event::new(x, y, t, Polarity::from_sign(p)))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn clamp_output_is_non_decreasing(events in arb_events()) {
            let stream = validate_stream(events, geo(4, 4), TimestampPolicy::Clamp).unwrap();
            prop_assert!(stream.events().windows(2).all(|w| w[0].t <= w[1].t));
        }

        #[test]
        fn validation_is_idempotent(events in arb_events(), clamp in any::<bool>()) {
            let policy = if clamp { TimestampPolicy::Clamp } else { TimestampPolicy::Reject };
            if let Ok(once) = validate_stream(events, geo(4, 4), policy) {
                let twice = validate_stream(once.events().to_vec(), geo(4, 4), policy).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
