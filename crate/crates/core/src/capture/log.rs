//! candump-style text logs: `(1.100000) can0 130#4500000000`, with the
//! parenthesised timestamp omitted in untimed logs.

use std::fmt::Write as _;

use thiserror::Error;

use crate::frame::CanFrame;
use crate::Micros;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct LogError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub timestamp: Option<Micros>,
    pub channel: String,
    pub frame: CanFrame,
}

impl LogRecord {
    pub fn new(timestamp: Option<Micros>, channel: &str, frame: CanFrame) -> Self {
        Self {
            timestamp,
            channel: channel.to_string(),
            frame,
        }
    }

    pub fn to_line(&self) -> String {
        let mut line = String::new();
        if let Some(t) = self.timestamp {
            write!(line, "({}.{:06}) ", t / 1_000_000, t % 1_000_000).unwrap();
        }
        write!(line, "{} {}", self.channel, self.frame).unwrap();
        line
    }
}

pub fn write_log(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

fn parse_timestamp(text: &str) -> Option<Micros> {
    let inner = text.strip_prefix('(')?.strip_suffix(')')?;
    let (sec, frac) = inner.split_once('.')?;
    if sec.is_empty() || frac.is_empty() || frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let sec: u64 = sec.parse().ok()?;
    let usec: u64 = format!("{frac:0<6}").parse().ok()?;
    sec.checked_mul(1_000_000)?.checked_add(usec)
}

fn parse_line(line: &str) -> Result<LogRecord, String> {
    let mut fields = line.split_whitespace();
    let mut first = fields.next().ok_or("empty line")?;
    let mut timestamp = None;
    if first.starts_with('(') {
        timestamp = Some(parse_timestamp(first).ok_or_else(|| format!("bad timestamp `{first}`"))?);
        first = fields.next().ok_or("missing channel")?;
    }
    let channel = first;
    let frame_text = fields.next().ok_or("missing frame")?;
    if let Some(extra) = fields.next() {
        return Err(format!("unexpected `{extra}`"));
    }
    let frame = frame_text.parse::<CanFrame>().map_err(|e| format!("{e}"))?;
    Ok(LogRecord::new(timestamp, channel, frame))
}

/// Parses a log. Blank lines are skipped; a log must be either fully
/// timed or fully untimed, and timed logs must not go back in time.
pub fn read_log(text: &str) -> Result<Vec<LogRecord>, LogError> {
    let mut records: Vec<LogRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |reason: String| LogError { line: line_no, reason };
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(line).map_err(err)?;
        if let Some(prev) = records.last() {
            match (prev.timestamp, record.timestamp) {
                (Some(a), Some(b)) if b < a => return Err(err("timestamp goes backwards".into())),
                (Some(_), None) | (None, Some(_)) => return Err(err("mixes timed and untimed lines".into())),
                _ => {}
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Drops all timestamps.
pub fn strip_timestamps(records: &[LogRecord]) -> Vec<LogRecord> {
    records
        .iter()
        .map(|r| LogRecord {
            timestamp: None,
            ..r.clone()
        })
        .collect()
}
