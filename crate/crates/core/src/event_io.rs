//! Event streams: the in-memory representation plus the text and binary
//! on-disk formats.
//!
//! Text: one `x y t p` line per event, LF terminated, no header.
//! Binary: 9-byte little-endian records `x:u16 y:u16 t:u32 p:u8`, no header.
//! Sensor geometry is always supplied out-of-band.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod synthetic;

pub use synthetic::{gen_synthetic, SyntheticKind, SyntheticParams};

/// Size in bytes of one binary event record.
pub const BINARY_RECORD_LEN: usize = 9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EventError {
    #[error("line {0}: expected four unsigned integers `x y t p`")]
    MalformedLine(usize),
    #[error("event {0}: coordinates or polarity out of bounds")]
    OutOfBounds(usize),
    #[error("event {0}: timestamp decreases")]
    NonMonotoneTime(usize),
    #[error("binary stream length is not a multiple of {BINARY_RECORD_LEN} bytes")]
    TruncatedRecord,
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

/// One camera event. `n` is the position in the stream, assigned at parse
/// time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Timestamp in microseconds.
    pub t: u32,
    /// Polarity bit, 0 or 1.
    pub p: u8,
    pub n: u32,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u32, p: u8, n: u32) -> Self {
        Self { x, y, t, p, n }
    }
}

/// An ordered event sequence together with the sensor geometry it was
/// recorded on.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventStream {
    pub width: u16,
    pub height: u16,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u16, height: u16) -> Self {
        Self {
            width,
            height,
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Appends an event, assigning the next stream index and enforcing the
    /// stream invariants. `position` is only used for error reporting.
    fn push_checked(
        &mut self,
        x: u64,
        y: u64,
        t: u32,
        p: u64,
        position: usize,
    ) -> Result<(), EventError> {
        if x >= u64::from(self.width) || y >= u64::from(self.height) || p > 1 {
            return Err(EventError::OutOfBounds(position));
        }
        if let Some(last) = self.events.last() {
            if t < last.t {
                return Err(EventError::NonMonotoneTime(position));
            }
        }
        let n = self.events.len() as u32;
        self.events
            .push(Event::new(x as u16, y as u16, t, p as u8, n));
        Ok(())
    }

    /// Checks every stream invariant: bounds, polarity, monotone time and
    /// consecutive indices.
    pub fn validate(&self) -> Result<(), EventError> {
        for (k, ev) in self.events.iter().enumerate() {
            if ev.x >= self.width || ev.y >= self.height || ev.p > 1 || ev.n as usize != k {
                return Err(EventError::OutOfBounds(k + 1));
            }
            if k > 0 && ev.t < self.events[k - 1].t {
                return Err(EventError::NonMonotoneTime(k + 1));
            }
        }
        Ok(())
    }
}

/// Parses the text format. Line numbers in errors are 1-based. A trailing
/// newline is accepted; blank lines elsewhere are malformed.
pub fn parse_text_stream(source: &[u8], width: u16, height: u16) -> Result<EventStream, EventError> {
    let text = std::str::from_utf8(source).map_err(|e| {
        let line = source[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        EventError::MalformedLine(line)
    })?;
    let mut stream = EventStream::new(width, height);
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(stream);
    }
    for (idx, line) in body.split('\n').enumerate() {
        let line_no = idx + 1;
        let mut fields = [0u64; 4];
        let mut count = 0;
        for tok in line.split_whitespace() {
            if count == 4 {
                return Err(EventError::MalformedLine(line_no));
            }
            fields[count] = tok.parse().map_err(|_| EventError::MalformedLine(line_no))?;
            count += 1;
        }
        if count != 4 {
            return Err(EventError::MalformedLine(line_no));
        }
        let [x, y, t, p] = fields;
        // 32-bit microsecond timestamps; wraparound is not modelled.
        let t = u32::try_from(t).map_err(|_| EventError::MalformedLine(line_no))?;
        stream.push_checked(x, y, t, p, line_no)?;
    }
    Ok(stream)
}

/// Serializes to the text format.
pub fn write_text_stream(stream: &EventStream) -> String {
    let mut out = String::with_capacity(stream.len() * 16);
    for ev in &stream.events {
        let _ = writeln!(out, "{} {} {} {}", ev.x, ev.y, ev.t, ev.p);
    }
    out
}

/// Parses the binary format. Record numbers in errors are 1-based.
pub fn parse_binary_stream(source: &[u8], width: u16, height: u16) -> Result<EventStream, EventError> {
    if source.len() % BINARY_RECORD_LEN != 0 {
        return Err(EventError::TruncatedRecord);
    }
    let mut stream = EventStream::new(width, height);
    stream.events.reserve(source.len() / BINARY_RECORD_LEN);
    for (idx, rec) in source.chunks_exact(BINARY_RECORD_LEN).enumerate() {
        let x = u16::from_le_bytes([rec[0], rec[1]]);
        let y = u16::from_le_bytes([rec[2], rec[3]]);
        let t = u32::from_le_bytes([rec[4], rec[5], rec[6], rec[7]]);
        let p = rec[8];
        stream.push_checked(x.into(), y.into(), t, p.into(), idx + 1)?;
    }
    Ok(stream)
}

pub fn write_binary_stream(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(stream.len() * BINARY_RECORD_LEN);
    for ev in &stream.events {
        out.extend_from_slice(&ev.x.to_le_bytes());
        out.extend_from_slice(&ev.y.to_le_bytes());
        out.extend_from_slice(&ev.t.to_le_bytes());
        out.push(ev.p);
    }
    out
}
