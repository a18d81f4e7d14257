//! Wire format between the sensor controller and the planner host.
//!
//! Upstream frames are one ASCII line per scan, `front,back,left,right\n`,
//! each field with exactly two fraction digits. Downstream commands are a
//! single byte: `f`, `b`, `l`, `r` or `s`.

use std::collections::VecDeque;
use std::io::Write;

use thiserror::Error;

use crate::reflex::Command;
use crate::sensor::{ScanVector, MAX_RANGE, MIN_RANGE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
    #[error("frame has {0} fields, expected 4")]
    FieldCount(usize),
    #[error("channel {channel} value {value} outside the {MIN_RANGE}-{MAX_RANGE} cm envelope")]
    Range { channel: usize, value: f64 },
    #[error("unknown command byte 0x{0:02x}")]
    UnknownCommand(u8),
}

/// Encoded scan line, newline included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceFrame(pub Vec<u8>);

impl DistanceFrame {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

pub fn encode_scan(scan: &ScanVector) -> DistanceFrame {
    let mut out = Vec::with_capacity(28);
    let [f, b, l, r] = scan.channels();
    writeln!(out, "{f:.2},{b:.2},{l:.2},{r:.2}").expect("write to vec");
    DistanceFrame(out)
}

pub fn decode_scan(bytes: &[u8]) -> Result<ScanVector, FrameError> {
    let body = match bytes.split_last() {
        Some((b'\n', body)) => body,
        _ => return Err(FrameError::Malformed("missing newline terminator")),
    };
    if body.contains(&b'\n') {
        return Err(FrameError::Malformed("embedded newline"));
    }
    let text = std::str::from_utf8(body).map_err(|_| FrameError::Malformed("not ASCII"))?;
    if !text.is_ascii() {
        return Err(FrameError::Malformed("not ASCII"));
    }
    let mut values = Vec::with_capacity(4);
    for field in text.split(',') {
        values.push(parse_field(field)?);
    }
    if values.len() != 4 {
        return Err(FrameError::FieldCount(values.len()));
    }
    for (channel, &value) in values.iter().enumerate() {
        if !(MIN_RANGE..=MAX_RANGE).contains(&value) {
            return Err(FrameError::Range { channel, value });
        }
    }
    Ok(ScanVector::new(values[0], values[1], values[2], values[3]))
}

/// Plain decimal: optional sign, digits, optional fraction. No exponents,
/// no `inf`/`nan`.
fn parse_field(field: &str) -> Result<f64, FrameError> {
    let digits = field.strip_prefix(['-', '+']).unwrap_or(field);
    let mut parts = digits.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let all_digits = |s: &str| s.bytes().all(|c| c.is_ascii_digit());
    let ok = !int.is_empty() && all_digits(int) && frac.is_none_or(|f| !f.is_empty() && all_digits(f));
    if !ok {
        return Err(FrameError::Malformed("non-numeric field"));
    }
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or(FrameError::Malformed("non-numeric field"))
}

pub fn encode_command(cmd: Command) -> u8 {
    match cmd {
        Command::Front => b'f',
        Command::Back => b'b',
        Command::Left => b'l',
        Command::Right => b'r',
        Command::Stop => b's',
    }
}

pub fn decode_command(byte: u8) -> Result<Command, FrameError> {
    match byte {
        b'f' => Ok(Command::Front),
        b'b' => Ok(Command::Back),
        b'l' => Ok(Command::Left),
        b'r' => Ok(Command::Right),
        b's' => Ok(Command::Stop),
        other => Err(FrameError::UnknownCommand(other)),
    }
}

/// FIFO link that delivers each message exactly `delay_ticks` after it was
/// sent. Ticks passed to `send` and `poll` must be non-decreasing.
#[derive(Debug, Clone)]
pub struct DelayChannel<T> {
    delay_ticks: u64,
    queue: VecDeque<(u64, T)>,
    last_tick: u64,
}

impl<T> DelayChannel<T> {
    pub fn new(delay_ticks: u64) -> Self {
        DelayChannel {
            delay_ticks,
            queue: VecDeque::new(),
            last_tick: 0,
        }
    }

    pub fn delay_ticks(&self) -> u64 {
        self.delay_ticks
    }

    pub fn send(&mut self, tick: u64, msg: T) {
        debug_assert!(tick >= self.last_tick, "ticks must not go backwards");
        self.last_tick = tick;
        self.queue.push_back((tick, msg));
    }

    /// Next message due at or before `tick`, oldest first.
    pub fn poll(&mut self, tick: u64) -> Option<T> {
        debug_assert!(tick >= self.last_tick, "ticks must not go backwards");
        self.last_tick = tick;
        match self.queue.front() {
            Some(&(sent, _)) if sent + self.delay_ticks <= tick => self.queue.pop_front().map(|(_, m)| m),
            _ => None,
        }
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Drops everything still in transit.
    pub fn clear(&mut self) {
        self.queue.clear();
    }
}
