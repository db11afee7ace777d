use std::fmt;

use serde::{Deserialize, Serialize};

use super::CatalogError;

/// A physical signal value as exchanged with the outside world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhysicalValue {
    Flag(bool),
    Number(f64),
    Text(String),
}

impl PhysicalValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Self::Flag(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Self::Text(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for PhysicalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Flag(v) => write!(f, "{v}"),
            Self::Number(v) => write!(f, "{v}"),
            Self::Text(v) => write!(f, "{v:?}"),
        }
    }
}

impl From<bool> for PhysicalValue {
    fn from(v: bool) -> Self {
        Self::Flag(v)
    }
}

impl From<f64> for PhysicalValue {
    fn from(v: f64) -> Self {
        Self::Number(v)
    }
}

impl From<&str> for PhysicalValue {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    Unsigned {
        scale: f64,
        offset: f64,
        min: f64,
        max: f64,
    },
    Flag,
    Enum(Vec<(String, u64)>),
    Ascii,
    Counter,
}

/// Placement and interpretation of one signal inside a payload.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub name: String,
    pub kind: SignalKind,
    /// Little-endian bit index of the least significant bit.
    pub start_bit: u16,
    pub length: u16,
    pub unit: String,
}

impl SignalSpec {
    /// Physical range of a numeric signal.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self.kind {
            SignalKind::Unsigned { min, max, .. } => Some((min, max)),
            _ => None,
        }
    }

    /// Checks a value against the signal's type and range without encoding.
    pub fn validate(&self, value: &PhysicalValue) -> Result<(), CatalogError> {
        if let SignalKind::Ascii = self.kind {
            let mut scratch = vec![0u8; usize::from((self.start_bit + self.length) / 8)];
            return self.write(&mut scratch, value);
        }
        self.to_raw(value).map(|_| ())
    }

    fn type_error(&self, value: &PhysicalValue) -> CatalogError {
        CatalogError::WrongType {
            signal: self.name.clone(),
            value: value.to_string(),
        }
    }

    fn to_raw(&self, value: &PhysicalValue) -> Result<u64, CatalogError> {
        match (&self.kind, value) {
            (SignalKind::Unsigned { scale, offset, min, max }, PhysicalValue::Number(v)) => {
                if !v.is_finite() || *v < *min || *v > *max {
                    return Err(CatalogError::OutOfRange {
                        signal: self.name.clone(),
                        value: *v,
                        min: *min,
                        max: *max,
                    });
                }
                Ok(to_steps(v - offset, *scale).round() as u64)
            }
            (SignalKind::Flag, PhysicalValue::Flag(b)) => Ok(u64::from(*b)),
            (SignalKind::Enum(values), PhysicalValue::Text(label)) => values
                .iter()
                .find(|(l, _)| l == label)
                .map(|(_, raw)| *raw)
                .ok_or_else(|| CatalogError::UnknownEnumLabel {
                    signal: self.name.clone(),
                    label: label.clone(),
                }),
            (SignalKind::Counter, PhysicalValue::Number(v)) => {
                if v.fract() != 0.0 || *v < 0.0 || *v > 14.0 {
                    return Err(CatalogError::InvalidCounter(*v as i64));
                }
                Ok(*v as u64)
            }
            _ => Err(self.type_error(value)),
        }
    }

    /// Writes `value` into `payload`, leaving every other bit untouched.
    pub fn write(&self, payload: &mut [u8], value: &PhysicalValue) -> Result<(), CatalogError> {
        if let SignalKind::Ascii = self.kind {
            let text = value.as_str().ok_or_else(|| self.type_error(value))?;
            let width = usize::from(self.length / 8);
            if !text.is_ascii() || text.len() > width {
                return Err(CatalogError::BadText {
                    signal: self.name.clone(),
                    width,
                });
            }
            let start = usize::from(self.start_bit / 8);
            let field = &mut payload[start..start + width];
            field.fill(b' ');
            field[..text.len()].copy_from_slice(text.as_bytes());
            return Ok(());
        }
        let raw = self.to_raw(value)?;
        write_bits(payload, self.start_bit, self.length, raw);
        Ok(())
    }

    pub fn read(&self, payload: &[u8]) -> PhysicalValue {
        if let SignalKind::Ascii = self.kind {
            let start = usize::from(self.start_bit / 8);
            let field = &payload[start..start + usize::from(self.length / 8)];
            return PhysicalValue::Text(String::from_utf8_lossy(field).trim_end().to_string());
        }
        let raw = read_bits(payload, self.start_bit, self.length);
        match &self.kind {
            SignalKind::Unsigned { scale, offset, .. } => PhysicalValue::Number(from_steps(raw as f64, *scale) + offset),
            SignalKind::Flag => PhysicalValue::Flag(raw != 0),
            SignalKind::Enum(values) => PhysicalValue::Text(
                values
                    .iter()
                    .find(|(_, r)| *r == raw)
                    .map_or_else(|| format!("0x{raw:02X}"), |(l, _)| l.clone()),
            ),
            SignalKind::Counter => PhysicalValue::Number(raw as f64),
            SignalKind::Ascii => unreachable!(),
        }
    }
}

/// Scales like 0.1 are applied as a division by their integer reciprocal so
/// that decoded values are the nearest doubles to the intended decimals.
fn reciprocal(scale: f64) -> Option<f64> {
    let inv = 1.0 / scale;
    ((inv - inv.round()).abs() < 1e-9).then(|| inv.round())
}

fn to_steps(v: f64, scale: f64) -> f64 {
    reciprocal(scale).map_or(v / scale, |inv| v * inv)
}

fn from_steps(raw: f64, scale: f64) -> f64 {
    reciprocal(scale).map_or(raw * scale, |inv| raw / inv)
}

pub(crate) fn write_bits(payload: &mut [u8], start: u16, length: u16, raw: u64) {
    for i in 0..length {
        let bit = usize::from(start + i);
        let mask = 1u8 << (bit % 8);
        if (raw >> i) & 1 == 1 {
            payload[bit / 8] |= mask;
        } else {
            payload[bit / 8] &= !mask;
        }
    }
}

pub(crate) fn read_bits(payload: &[u8], start: u16, length: u16) -> u64 {
    (0..length).fold(0u64, |acc, i| {
        let bit = usize::from(start + i);
        acc | (u64::from((payload[bit / 8] >> (bit % 8)) & 1) << i)
    })
}
