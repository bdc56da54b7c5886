//! File formats: CSV event interchange, binary event files, tensor files
//! and sensor-state checkpoints. All binary layouts are little-endian,
//! fixed-width and packed.
//!
//! Event file (`EVT1`):
//!
//! ```text
//! magic "EVT1" | version u16 | width u16 | height u16 | convention u8 | count u64
//! count x { t u64 | x u16 | y u16 | p u8 }
//! ```
//!
//! Convention 1 (binary) stores `p` as 1 = on, 0 = off; convention 0
//! (signed) stores it as an `i8` of +1 / -1. Writers always emit binary.
//!
//! Tensor file (`TOR1`):
//!
//! ```text
//! magic "TOR1" | version u16 | dtype u8 (0 = f64, 1 = f32) | rank u8 | rank x u32 dims
//! row-major payload
//! ```
//!
//! State checkpoint (`TCK1`):
//!
//! ```text
//! magic "TCK1" | version u16 | width u16 | height u16 | depth u32 | tau u64 | tau' u64
//! policy u8 (0 = reject, 1 = clamp) | has_last u8 | last u64 | slot count u64
//! slot count x u64, in [channel][k][y][x] order, u64::MAX for empty
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{
    normalize_polarity, validate_stream, Event, EventStream, Polarity, PolarityConvention, SensorGeometry,
    TimestampPolicy,
};
use crate::state::{SensorState, ToreConfig};
use crate::tensor::Tensor;

pub const EVENT_MAGIC: [u8; 4] = *b"EVT1";
pub const TENSOR_MAGIC: [u8; 4] = *b"TOR1";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TCK1";
pub const FORMAT_VERSION: u16 = 1;

pub const EVENT_HEADER_LEN: usize = 19;
pub const EVENT_RECORD_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    #[default]
    F64,
    F32,
}

impl Dtype {
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::F32 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Dtype::F64),
            1 => Ok(Dtype::F32),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::TruncatedFile {
                offset: self.pos,
                needed: n,
                available: self.remaining(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found = self.array::<4>()?;
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let found = self.u16()?;
        if found != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found,
                expected: FORMAT_VERSION,
            });
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV

/// Parses `t,x,y,p` lines. A first line with no numeric field is a header.
/// Without a geometry, the sensor is sized to the largest coordinates seen.
pub fn parse_events_csv<R: BufRead>(
    reader: R,
    convention: PolarityConvention,
    geometry: Option<SensorGeometry>,
    policy: TimestampPolicy,
) -> Result<EventStream> {
    let mut events = Vec::new();
    let mut seen_content = false;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let first = !seen_content;
        seen_content = true;
        if first && fields.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields t,x,y,p, found {}", fields.len()),
            });
        }
        let err = |what: &str, value: &str| Error::Parse {
            line: line_no,
            message: format!("invalid {what} `{value}`"),
        };
        let t: u64 = fields[0].parse().map_err(|_| err("timestamp", fields[0]))?;
        let x: u16 = fields[1].parse().map_err(|_| err("x", fields[1]))?;
        let y: u16 = fields[2].parse().map_err(|_| err("y", fields[2]))?;
        let raw: i64 = fields[3].parse().map_err(|_| err("polarity", fields[3]))?;
        let p = normalize_polarity(raw, convention).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        events.push(Event::new(x, y, t, p));
    }
    let geometry = match geometry {
        Some(g) => g,
        None => infer_geometry(&events)?,
    };
    validate_stream(events, geometry, policy)
}

fn infer_geometry(events: &[Event]) -> Result<SensorGeometry> {
    let w = events.iter().map(|e| e.x as u32 + 1).max().unwrap_or(1);
    let h = events.iter().map(|e| e.y as u32 + 1).max().unwrap_or(1);
    if w > u16::MAX as u32 || h > u16::MAX as u32 {
        return Err(Error::InvalidGeometry { width: w, height: h });
    }
    SensorGeometry::new(w as u16, h as u16)
}

pub fn read_events_csv(
    path: impl AsRef<Path>,
    convention: PolarityConvention,
    geometry: Option<SensorGeometry>,
    policy: TimestampPolicy,
) -> Result<EventStream> {
    let file = File::open(path)?;
    parse_events_csv(BufReader::new(file), convention, geometry, policy)
}

pub fn write_events_csv(stream: &EventStream, path: impl AsRef<Path>, convention: PolarityConvention) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,x,y,p")?;
    for e in stream.events() {
        let p = match (convention, e.p) {
            (PolarityConvention::Binary, Polarity::On) => 1,
            (PolarityConvention::Binary, Polarity::Off) => 0,
            (PolarityConvention::Signed, p) => i64::from(p.sign()),
        };
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, p)?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary events

pub fn encode_events(stream: &EventStream) -> Vec<u8> {
    let g = stream.geometry();
    let mut out = Vec::with_capacity(EVENT_HEADER_LEN + stream.len() * EVENT_RECORD_LEN);
    out.extend_from_slice(&EVENT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&g.width().to_le_bytes());
    out.extend_from_slice(&g.height().to_le_bytes());
    out.push(1);
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(u8::from(e.p == Polarity::On));
    }
    out
}

pub fn decode_events(bytes: &[u8], policy: TimestampPolicy) -> Result<EventStream> {
    let mut r = ByteReader::new(bytes);
    r.magic(EVENT_MAGIC)?;
    r.version()?;
    let width = r.u16()?;
    let height = r.u16()?;
    let convention = match r.u8()? {
        0 => PolarityConvention::Signed,
        1 => PolarityConvention::Binary,
        other => return Err(Error::InvalidConfig(format!("unknown polarity convention tag {other}"))),
    };
    let declared = r.u64()?;
    let geometry = SensorGeometry::new(width, height)?;

    let body = r.remaining();
    let whole = (body / EVENT_RECORD_LEN) as u64;
    if whole < declared && !body.is_multiple_of(EVENT_RECORD_LEN) {
        // the last record was cut short
        return Err(Error::TruncatedFile {
            offset: r.pos + whole as usize * EVENT_RECORD_LEN,
            needed: EVENT_RECORD_LEN,
            available: body % EVENT_RECORD_LEN,
        });
    }
    if whole != declared || !body.is_multiple_of(EVENT_RECORD_LEN) {
        return Err(Error::CountMismatch { declared, found: whole });
    }

    let mut events = Vec::with_capacity(declared as usize);
    for index in 0..declared as usize {
        let t = r.u64()?;
        let x = r.u16()?;
        let y = r.u16()?;
        let raw = r.u8()?;
        let raw = match convention {
            PolarityConvention::Signed => i64::from(raw as i8),
            PolarityConvention::Binary => i64::from(raw),
        };
        let p = normalize_polarity(raw, convention).map_err(|e| Error::at_event(index, e))?;
        events.push(Event::new(x, y, t, p));
    }
    validate_stream(events, geometry, policy)
}

pub fn write_events_binary(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_events(stream))
}

pub fn read_events_binary(path: impl AsRef<Path>) -> Result<EventStream> {
    read_events_binary_with_policy(path, TimestampPolicy::Reject)
}

pub fn read_events_binary_with_policy(path: impl AsRef<Path>, policy: TimestampPolicy) -> Result<EventStream> {
    decode_events(&fs::read(path)?, policy)
}

// ---------------------------------------------------------------------------
// Tensors

pub fn encode_tensor(tensor: &Tensor, dtype: Dtype) -> Result<Vec<u8>> {
    let dims = tensor.dims();
    if dims.len() > u8::MAX as usize {
        return Err(Error::InvalidConfig(format!("rank {} too large", dims.len())));
    }
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + tensor.len() * dtype.size());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(dtype.tag());
    out.push(dims.len() as u8);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::InvalidConfig(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match dtype {
        Dtype::F64 => {
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Dtype::F32 => {
            // `as` rounds to nearest, ties to even
            for &v in tensor.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Decodes a tensor file; f32 payloads are widened to f64 exactly.
pub fn decode_tensor(bytes: &[u8]) -> Result<(Tensor, Dtype)> {
    let mut r = ByteReader::new(bytes);
    r.magic(TENSOR_MAGIC)?;
    r.version()?;
    let dtype = Dtype::from_tag(r.u8()?)?;
    let rank = r.u8()? as usize;
    let dims = (0..rank)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidConfig(format!("tensor dims {dims:?} overflow")))?;
    let payload_len = len
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::InvalidConfig(format!("tensor dims {dims:?} overflow")))?;
    let payload = r.take(payload_len)?;
    if r.remaining() != 0 {
        return Err(Error::CountMismatch {
            declared: len as u64,
            found: (len + r.remaining() / dtype.size()) as u64,
        });
    }
    let data: Vec<f64> = match dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
            .collect(),
    };
    Ok((Tensor::new(dims, data)?, dtype))
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    write_file(path.as_ref(), &encode_tensor(tensor, dtype)?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(decode_tensor(&fs::read(path)?)?.0)
}

// ---------------------------------------------------------------------------
// Checkpoints

pub fn encode_state(state: &SensorState) -> Vec<u8> {
    let g = state.geometry();
    let cfg = state.config();
    let slots = state.slots();
    let mut out = Vec::with_capacity(48 + slots.len() * 8);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&g.width().to_le_bytes());
    out.extend_from_slice(&g.height().to_le_bytes());
    out.extend_from_slice(&(cfg.depth as u32).to_le_bytes());
    out.extend_from_slice(&cfg.tau_us.to_le_bytes());
    out.extend_from_slice(&cfg.tau_prime_us.to_le_bytes());
    out.push(match cfg.policy {
        TimestampPolicy::Reject => 0,
        TimestampPolicy::Clamp => 1,
    });
    out.push(u8::from(state.last_event_time().is_some()));
    out.extend_from_slice(&state.last_event_time().unwrap_or(0).to_le_bytes());
    out.extend_from_slice(&(slots.len() as u64).to_le_bytes());
    for s in slots {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn decode_state(bytes: &[u8]) -> Result<SensorState> {
    let mut r = ByteReader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version()?;
    let geometry = SensorGeometry::new(r.u16()?, r.u16()?)?;
    let depth = r.u32()? as usize;
    let tau_us = r.u64()?;
    let tau_prime_us = r.u64()?;
    let policy = match r.u8()? {
        0 => TimestampPolicy::Reject,
        1 => TimestampPolicy::Clamp,
        other => return Err(Error::InvalidConfig(format!("unknown policy tag {other}"))),
    };
    let has_last = r.u8()? != 0;
    let last = r.u64()?;
    let declared = r.u64()?;
    if !r.remaining().is_multiple_of(8) || (r.remaining() / 8) as u64 != declared {
        if ((r.remaining() / 8) as u64) < declared {
            return Err(Error::TruncatedFile {
                offset: r.pos,
                needed: (declared as usize).saturating_mul(8),
                available: r.remaining(),
            });
        }
        return Err(Error::CountMismatch {
            declared,
            found: (r.remaining() / 8) as u64,
        });
    }
    let slots = r
        .take(declared as usize * 8)?
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let config = ToreConfig {
        depth,
        tau_us,
        tau_prime_us,
        policy,
    };
    SensorState::from_parts(geometry, config, slots, has_last.then_some(last))
}

pub fn checkpoint_state(state: &SensorState, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_state(state))
}

pub fn restore_state(path: impl AsRef<Path>) -> Result<SensorState> {
    decode_state(&fs::read(path)?)
}
