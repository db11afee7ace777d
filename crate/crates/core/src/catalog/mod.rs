//! The body-bus message catalog: per-id payload layouts, signal
//! encode/decode and alive-counter arithmetic.
//!
//! The catalog is loaded from `data/signal_catalog.toml`, which is compiled
//! into the library.

mod signal;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use signal::{PhysicalValue, SignalKind, SignalSpec};

use crate::Micros;

const CATALOG_TOML: &str = include_str!("../../data/signal_catalog.toml");

/// Highest valid alive-counter value; 0xF is reserved.
pub const COUNTER_MAX: u8 = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("catalog syntax: {0}")]
    Syntax(String),
    #[error("catalog entry {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("id 0x{0:03X} is not in the catalog")]
    UnknownId(u32),
    #[error("0x{id:03X} payload is {actual} bytes, expected {expected}")]
    WrongLength { id: u32, expected: usize, actual: usize },
    #[error("0x{id:03X} has no signal `{signal}`")]
    UnknownSignal { id: u32, signal: String },
    #[error("no value for signal `{signal}` of 0x{id:03X}")]
    MissingSignal { id: u32, signal: String },
    #[error("{signal} = {value} outside [{min}, {max}]")]
    OutOfRange { signal: String, value: f64, min: f64, max: f64 },
    #[error("{value} is not a valid value for {signal}")]
    WrongType { signal: String, value: String },
    #[error("`{label}` is not a state of {signal}")]
    UnknownEnumLabel { signal: String, label: String },
    #[error("{signal} takes at most {width} ASCII characters")]
    BadText { signal: String, width: usize },
    #[error("0x{id:03X}: counter supplied {supplied} but protection is {protected}")]
    CounterPresence { id: u32, supplied: bool, protected: bool },
    #[error("alive counter {0} outside 0..=14")]
    InvalidCounter(i64),
}

/// Transmission period of a catalog message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    /// Every `n` milliseconds.
    Every(u32),
    /// Once per ignition cycle.
    Once,
}

impl Period {
    pub fn millis(self) -> Option<u32> {
        match self {
            Self::Every(ms) => Some(ms),
            Self::Once => None,
        }
    }

    pub fn micros(self) -> Option<Micros> {
        self.millis().map(|ms| Micros::from(ms) * 1000)
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Every(ms) => write!(f, "{ms} ms"),
            Self::Once => f.write_str("once"),
        }
    }
}

/// A 4-bit alive counter value in 0..=14.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AliveCounter(u8);

impl AliveCounter {
    pub fn new(value: u8) -> Result<Self, CatalogError> {
        if value > COUNTER_MAX {
            return Err(CatalogError::InvalidCounter(i64::from(value)));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    #[must_use]
    pub fn next(self) -> Self {
        Self((self.0 + 1) % (COUNTER_MAX + 1))
    }

    /// Counter `n` steps ahead.
    #[must_use]
    pub fn advance(self, n: u32) -> Self {
        Self(((u32::from(self.0) + n) % (u32::from(COUNTER_MAX) + 1)) as u8)
    }
}

impl fmt::Display for AliveCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:X}", self.0)
    }
}

/// Successor of an alive counter: `(c + 1) mod 15`.
pub fn next_counter(c: u8) -> Result<u8, CatalogError> {
    Ok(AliveCounter::new(c)?.next().value())
}

/// One catalog row.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSpec {
    pub id: u32,
    pub dlc: u8,
    pub description: String,
    pub period: Period,
    pub counter_protected: bool,
    /// Payload bits not covered by any signal.
    pub template: Vec<u8>,
    pub signals: Vec<SignalSpec>,
}

impl MessageSpec {
    pub fn signal(&self, name: &str) -> Option<&SignalSpec> {
        self.signals.iter().find(|s| s.name == name)
    }

    fn require_signal(&self, name: &str) -> Result<&SignalSpec, CatalogError> {
        self.signal(name).ok_or_else(|| CatalogError::UnknownSignal {
            id: self.id,
            signal: name.to_string(),
        })
    }

    fn check_length(&self, payload: &[u8]) -> Result<(), CatalogError> {
        if payload.len() != usize::from(self.dlc) {
            return Err(CatalogError::WrongLength {
                id: self.id,
                expected: usize::from(self.dlc),
                actual: payload.len(),
            });
        }
        Ok(())
    }
}

/// A decoded signal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalUpdate {
    pub name: String,
    pub value: PhysicalValue,
    pub unit: String,
}

/// Anything that can supply physical signal values for encoding.
pub trait SignalSource {
    fn signal(&self, name: &str) -> Option<PhysicalValue>;
}

impl SignalSource for BTreeMap<String, PhysicalValue> {
    fn signal(&self, name: &str) -> Option<PhysicalValue> {
        self.get(name).cloned()
    }
}

impl SignalSource for HashMap<String, PhysicalValue> {
    fn signal(&self, name: &str) -> Option<PhysicalValue> {
        self.get(name).cloned()
    }
}

impl SignalSource for [(&str, PhysicalValue)] {
    fn signal(&self, name: &str) -> Option<PhysicalValue> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| v.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    messages: Vec<MessageSpec>,
}

/// The built-in catalog.
pub fn catalog() -> &'static Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG.get_or_init(|| Catalog::from_toml(CATALOG_TOML).expect("built-in signal catalog is valid"))
}

impl Catalog {
    pub fn from_toml(text: &str) -> Result<Self, CatalogError> {
        let raw: RawCatalog = toml::from_str(text).map_err(|e| CatalogError::Syntax(e.to_string()))?;
        let mut messages = raw
            .message
            .into_iter()
            .map(RawMessage::validate)
            .collect::<Result<Vec<_>, _>>()?;
        messages.sort_by_key(|m| m.id);
        if let Some(w) = messages.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(CatalogError::Invalid {
                id: format!("{:03X}", w[0].id),
                reason: "duplicate id".into(),
            });
        }
        Ok(Self { messages })
    }

    /// Messages in ascending id order.
    pub fn messages(&self) -> &[MessageSpec] {
        &self.messages
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.messages.iter().map(|m| m.id)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&MessageSpec> {
        self.messages
            .binary_search_by_key(&id, |m| m.id)
            .ok()
            .map(|i| &self.messages[i])
    }

    pub fn spec(&self, id: u32) -> Result<&MessageSpec, CatalogError> {
        self.get(id).ok_or(CatalogError::UnknownId(id))
    }

    /// Position of `id` in ascending id order.
    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.messages.binary_search_by_key(&id, |m| m.id).ok()
    }

    /// Builds the payload of `id` from `source`. `counter` must be given
    /// exactly for counter-protected ids.
    pub fn encode(
        &self,
        id: u32,
        source: &(impl SignalSource + ?Sized),
        counter: Option<AliveCounter>,
    ) -> Result<Vec<u8>, CatalogError> {
        let spec = self.spec(id)?;
        if counter.is_some() != spec.counter_protected {
            return Err(CatalogError::CounterPresence {
                id,
                supplied: counter.is_some(),
                protected: spec.counter_protected,
            });
        }
        let mut payload = spec.template.clone();
        for sig in &spec.signals {
            let value = match (&sig.kind, counter) {
                (SignalKind::Counter, Some(c)) => PhysicalValue::Number(f64::from(c.value())),
                _ => source.signal(&sig.name).ok_or_else(|| CatalogError::MissingSignal {
                    id,
                    signal: sig.name.clone(),
                })?,
            };
            sig.write(&mut payload, &value)?;
        }
        Ok(payload)
    }

    /// Rewrites the named signals of an existing payload. Every other bit,
    /// including any alive counter, is preserved.
    pub fn patch(&self, id: u32, payload: &[u8], updates: &[(String, PhysicalValue)]) -> Result<Vec<u8>, CatalogError> {
        let spec = self.spec(id)?;
        spec.check_length(payload)?;
        let mut out = payload.to_vec();
        for (name, value) in updates {
            spec.require_signal(name)?.write(&mut out, value)?;
        }
        Ok(out)
    }

    /// Checks that `value` could be written to signal `name` of `id`.
    pub fn validate(&self, id: u32, name: &str, value: &PhysicalValue) -> Result<(), CatalogError> {
        self.spec(id)?.require_signal(name)?.validate(value)
    }

    pub fn decode(&self, id: u32, payload: &[u8]) -> Result<Vec<SignalUpdate>, CatalogError> {
        let spec = self.spec(id)?;
        spec.check_length(payload)?;
        Ok(spec
            .signals
            .iter()
            .map(|sig| SignalUpdate {
                name: sig.name.clone(),
                value: sig.read(payload),
                unit: sig.unit.clone(),
            })
            .collect())
    }

    /// Reads the alive counter of a counter-protected payload. The raw
    /// nibble is returned so that the reserved value 0xF stays visible.
    pub fn counter_of(&self, id: u32, payload: &[u8]) -> Result<Option<u8>, CatalogError> {
        let spec = self.spec(id)?;
        spec.check_length(payload)?;
        Ok(spec
            .signals
            .iter()
            .find(|s| s.kind == SignalKind::Counter)
            .map(|s| signal::read_bits(payload, s.start_bit, s.length) as u8))
    }
}

impl Catalog {
    /// Copies the raw alive-counter bits of `from` into `to`. Ids without a
    /// counter are left alone.
    pub fn carry_counter(&self, id: u32, from: &[u8], to: &mut [u8]) -> Result<(), CatalogError> {
        let spec = self.spec(id)?;
        spec.check_length(from)?;
        spec.check_length(to)?;
        for s in spec.signals.iter().filter(|s| s.kind == SignalKind::Counter) {
            let raw = signal::read_bits(from, s.start_bit, s.length);
            signal::write_bits(to, s.start_bit, s.length, raw);
        }
        Ok(())
    }
}

/// Decodes with the built-in catalog.
pub fn decode(id: u32, payload: &[u8]) -> Result<Vec<SignalUpdate>, CatalogError> {
    catalog().decode(id, payload)
}

/// Encodes with the built-in catalog.
pub fn encode(
    id: u32,
    source: &(impl SignalSource + ?Sized),
    counter: Option<AliveCounter>,
) -> Result<Vec<u8>, CatalogError> {
    catalog().encode(id, source, counter)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    message: Vec<RawMessage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMessage {
    id: String,
    dlc: u8,
    description: String,
    period_ms: Option<u32>,
    #[serde(default)]
    once: bool,
    #[serde(default)]
    counter: bool,
    template: String,
    #[serde(default)]
    signals: Vec<RawSignal>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSignal {
    name: String,
    kind: String,
    start_bit: u16,
    length: Option<u16>,
    scale: Option<f64>,
    #[serde(default)]
    offset: f64,
    min: Option<f64>,
    max: Option<f64>,
    #[serde(default)]
    unit: String,
    values: Option<BTreeMap<String, u64>>,
}

impl RawMessage {
    fn validate(self) -> Result<MessageSpec, CatalogError> {
        let invalid = |reason: String| CatalogError::Invalid {
            id: self.id.clone(),
            reason,
        };
        let id = u32::from_str_radix(&self.id, 16).map_err(|_| invalid("id is not hex".into()))?;
        if id > crate::frame::MAX_STANDARD_ID {
            return Err(invalid("id exceeds 11 bits".into()));
        }
        if usize::from(self.dlc) > crate::frame::MAX_DLC {
            return Err(invalid(format!("dlc {} exceeds 8", self.dlc)));
        }
        let period = match (self.period_ms, self.once) {
            (Some(ms), false) if ms > 0 => Period::Every(ms),
            (None, true) => Period::Once,
            _ => return Err(invalid("needs exactly one of a positive period_ms or once".into())),
        };
        let template =
            crate::frame::parse_hex_bytes(&self.template).ok_or_else(|| invalid("template is not hex".into()))?;
        if template.len() != usize::from(self.dlc) {
            return Err(invalid(format!("template has {} bytes", template.len())));
        }
        let bits = u16::from(self.dlc) * 8;
        let mut names = BTreeSet::new();
        let mut signals = Vec::with_capacity(self.signals.len());
        for raw in self.signals {
            if !names.insert(raw.name.clone()) {
                return Err(invalid(format!("duplicate signal {}", raw.name)));
            }
            let sig = raw.validate().map_err(invalid)?;
            if sig.start_bit + sig.length > bits {
                return Err(invalid(format!("{} does not fit in {} bytes", sig.name, self.dlc)));
            }
            signals.push(sig);
        }
        let has_counter = signals.iter().any(|s| s.kind == SignalKind::Counter);
        if has_counter != self.counter {
            return Err(invalid("counter flag disagrees with signals".into()));
        }
        Ok(MessageSpec {
            id,
            dlc: self.dlc,
            description: self.description,
            period,
            counter_protected: self.counter,
            template,
            signals,
        })
    }
}

impl RawSignal {
    fn validate(self) -> Result<SignalSpec, String> {
        let name = self.name;
        let (kind, length) = match self.kind.as_str() {
            "unsigned" => {
                let (Some(length), Some(scale), Some(min), Some(max)) = (self.length, self.scale, self.min, self.max)
                else {
                    return Err(format!("{name}: unsigned needs length, scale, min and max"));
                };
                if !(scale > 0.0) || min > max || length == 0 || length > 32 {
                    return Err(format!("{name}: bad scale, range or length"));
                }
                let raw_max = ((max - self.offset) / scale).round();
                let raw_min = ((min - self.offset) / scale).round();
                if raw_min < 0.0 || raw_max >= 2f64.powi(i32::from(length)) {
                    return Err(format!("{name}: range does not fit in {length} bits"));
                }
                (
                    SignalKind::Unsigned {
                        scale,
                        offset: self.offset,
                        min,
                        max,
                    },
                    length,
                )
            }
            "flag" => (SignalKind::Flag, self.length.unwrap_or(1)),
            "enum" => {
                let values = self.values.ok_or_else(|| format!("{name}: enum needs values"))?;
                let mut values: Vec<_> = values.into_iter().collect();
                values.sort_by_key(|(_, raw)| *raw);
                (SignalKind::Enum(values), self.length.unwrap_or(8))
            }
            "ascii" => {
                let length = self.length.ok_or_else(|| format!("{name}: ascii needs length"))?;
                if length % 8 != 0 || self.start_bit % 8 != 0 {
                    return Err(format!("{name}: ascii must be byte aligned"));
                }
                (SignalKind::Ascii, length)
            }
            "counter" => (SignalKind::Counter, self.length.unwrap_or(4)),
            other => return Err(format!("{name}: unknown kind {other}")),
        };
        if kind == SignalKind::Flag && length != 1 {
            return Err(format!("{name}: flags are one bit"));
        }
        Ok(SignalSpec {
            name,
            kind,
            start_bit: self.start_bit,
            length,
            unit: self.unit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn src(pairs: &[(&str, PhysicalValue)]) -> BTreeMap<String, PhysicalValue> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn zeros(id: u32) -> BTreeMap<String, PhysicalValue> {
        catalog()
            .spec(id)
            .unwrap()
            .signals
            .iter()
            .filter_map(|s| {
                let v = match &s.kind {
                    SignalKind::Unsigned { min, .. } => PhysicalValue::Number(*min),
                    SignalKind::Flag => PhysicalValue::Flag(false),
                    SignalKind::Enum(v) => PhysicalValue::Text(v[0].0.clone()),
                    SignalKind::Ascii => PhysicalValue::Text(String::new()),
                    SignalKind::Counter => return None,
                };
                Some((s.name.clone(), v))
            })
            .collect()
    }

    /// Checked-in copy of the published table: id, length, period.
    const TABLE: [(u32, u8, Option<u32>); 18] = [
        (0x0A8, 8, Some(10)),
        (0x0AA, 8, Some(10)),
        (0x0C0, 2, Some(200)),
        (0x0CE, 8, Some(10)),
        (0x0D7, 2, Some(200)),
        (0x130, 5, Some(100)),
        (0x19E, 8, Some(200)),
        (0x1A6, 8, Some(100)),
        (0x1D0, 8, Some(200)),
        (0x21A, 3, Some(5000)),
        (0x26E, 8, Some(200)),
        (0x335, 8, Some(1000)),
        (0x349, 5, Some(200)),
        (0x34F, 2, Some(1000)),
        (0x380, 7, None),
        (0x39E, 8, None),
        (0x3B4, 8, Some(4000)),
        (0x581, 8, Some(5000)),
    ];

    #[test]
    fn catalog_matches_the_table() {
        let cat = catalog();
        assert_eq!(cat.len(), TABLE.len());
        for (spec, (id, dlc, period)) in cat.messages().iter().zip(TABLE) {
            assert_eq!(spec.id, id);
            assert_eq!(spec.dlc, dlc, "dlc of {id:03X}");
            assert_eq!(spec.period.millis(), period, "period of {id:03X}");
        }
        let protected: Vec<_> = cat.messages().iter().filter(|m| m.counter_protected).map(|m| m.id).collect();
        assert_eq!(protected, [0x0C0, 0x0D7]);
    }

    #[test]
    fn catalog_rows_from_the_table() {
        let cat = catalog();
        assert_eq!(cat.spec(0x130).unwrap().period, Period::Every(100));
        assert_eq!(cat.spec(0x130).unwrap().dlc, 5);
        assert_eq!(cat.spec(0x0AA).unwrap().period, Period::Every(10));
        assert_eq!(cat.spec(0x380).unwrap().period, Period::Once);
        assert_eq!(cat.spec(0x335).unwrap().description, "Unknown");
    }

    #[test]
    fn rpm_5500_lands_in_bytes_4_and_5() {
        let p = encode(0x0AA, &src(&[("rpm", 5500.0.into()), ("throttle", 0.0.into())]), None).unwrap();
        assert_eq!(&p[4..6], &[0xF0, 0x55]);
        assert_eq!(p.len(), 8);
    }

    #[test]
    fn zero_speed_is_all_zero() {
        let p = encode(0x1A6, &src(&[("speed", 0.0.into())]), None).unwrap();
        assert_eq!(p, [0; 8]);
    }

    #[test]
    fn counter_sits_under_a_high_nibble_of_f() {
        let p = encode(0x0C0, &BTreeMap::new(), Some(AliveCounter::new(7).unwrap())).unwrap();
        assert_eq!(p, [0xF7, 0xFF]);
        assert_eq!(catalog().counter_of(0x0C0, &p).unwrap(), Some(7));
    }

    #[test]
    fn counter_presence_must_match_protection() {
        assert!(matches!(
            encode(0x0C0, &BTreeMap::new(), None),
            Err(CatalogError::CounterPresence { .. })
        ));
        assert!(matches!(
            encode(0x1A6, &zeros(0x1A6), Some(AliveCounter::default())),
            Err(CatalogError::CounterPresence { .. })
        ));
    }

    #[test]
    fn speed_260_round_trips() {
        let p = encode(0x1A6, &src(&[("speed", 260.0.into())]), None).unwrap();
        assert_eq!(decode(0x1A6, &p).unwrap()[0].value, PhysicalValue::Number(260.0));
    }

    #[test]
    fn handbrake_bit() {
        let d = decode(0x34F, &[0x01, 0x00]).unwrap();
        assert_eq!(d[0].name, "handbrake");
        assert_eq!(d[0].value, PhysicalValue::Flag(true));
    }

    #[test]
    fn zero_engine_frame_decodes_to_zero() {
        let d = decode(0x0AA, &[0; 8]).unwrap();
        assert!(d.iter().all(|u| u.value == PhysicalValue::Number(0.0)));
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn errors_for_unknown_id_and_length() {
        assert_eq!(decode(0x7FF, &[]), Err(CatalogError::UnknownId(0x7FF)));
        assert!(matches!(decode(0x1A6, &[0; 7]), Err(CatalogError::WrongLength { .. })));
        assert!(matches!(
            encode(0x1A6, &src(&[("speed", 1001.0.into())]), None),
            Err(CatalogError::OutOfRange { .. })
        ));
        assert!(matches!(
            encode(0x1A6, &BTreeMap::new(), None),
            Err(CatalogError::MissingSignal { .. })
        ));
    }

    #[test]
    fn unknown_message_carries_nothing() {
        assert_eq!(encode(0x335, &BTreeMap::new(), None).unwrap(), [0; 8]);
        assert!(decode(0x335, &[0; 8]).unwrap().is_empty());
    }

    #[test]
    fn airbag_counter_keeps_second_byte() {
        let p = encode(0x0D7, &BTreeMap::new(), Some(AliveCounter::new(14).unwrap())).unwrap();
        assert_eq!(p, [0xFE, 0xFF]);
    }

    #[test]
    fn ignition_states_and_unknown_raw() {
        let p = encode(0x130, &src(&[("ignition", "running".into())]), None).unwrap();
        assert_eq!(p, [0x55, 0, 0, 0, 0]);
        let d = decode(0x130, &[0x12, 0, 0, 0, 0]).unwrap();
        assert_eq!(d[0].value, PhysicalValue::Text("0x12".into()));
    }

    #[test]
    fn vin_is_space_padded_ascii() {
        let p = encode(0x380, &src(&[("vin", "PK12345".into())]), None).unwrap();
        assert_eq!(p, b"PK12345");
        let p = encode(0x380, &src(&[("vin", "AB".into())]), None).unwrap();
        assert_eq!(decode(0x380, &p).unwrap()[0].value, PhysicalValue::Text("AB".into()));
        assert!(encode(0x380, &src(&[("vin", "TOOLONGX".into())]), None).is_err());
    }

    #[test]
    fn temperature_offset() {
        let p = encode(0x1D0, &src(&[("engine_temp", 90.0.into()), ("handbrake_mirror", true.into())]), None).unwrap();
        assert_eq!(p[0], 138);
        assert_eq!(p[5], 0x01);
    }

    #[test]
    fn patch_keeps_counter_and_other_bits() {
        let original = [0xAB, 0xCD, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66];
        let patched = catalog()
            .patch(0x0AA, &original, &[("rpm".into(), 5500.0.into())])
            .unwrap();
        assert_eq!(patched, [0xAB, 0xCD, 0x11, 0x22, 0xF0, 0x55, 0x55, 0x66]);
        assert!(matches!(
            catalog().patch(0x0AA, &original, &[("speed".into(), 1.0.into())]),
            Err(CatalogError::UnknownSignal { .. })
        ));
    }

    #[test]
    fn counter_successor() {
        assert_eq!(next_counter(0), Ok(1));
        assert_eq!(next_counter(14), Ok(0));
        assert_eq!(next_counter(15), Err(CatalogError::InvalidCounter(15)));
    }

    #[test]
    fn counter_cycle_never_emits_fifteen() {
        let mut c = AliveCounter::default();
        let mut seen = Vec::new();
        for _ in 0..30 {
            seen.push(c.value());
            c = c.next();
        }
        assert_eq!(&seen[..15], &(0..15).collect::<Vec<u8>>()[..]);
        assert_eq!(&seen[15..], &seen[..15]);
        assert_eq!(AliveCounter::new(3).unwrap().advance(14).value(), 2);
    }

    #[test]
    fn malformed_catalogs_are_rejected() {
        let base = |extra: &str| {
            format!("[[message]]\nid = \"100\"\ndlc = 2\ndescription = \"x\"\ntemplate = \"0000\"\n{extra}")
        };
        assert!(Catalog::from_toml(&base("period_ms = 10")).is_ok());
        assert!(Catalog::from_toml(&base("")).is_err());
        assert!(Catalog::from_toml(&base("period_ms = 10\nonce = true")).is_err());
        assert!(Catalog::from_toml(&base(
            "period_ms = 10\nsignals = [{ name = \"a\", kind = \"unsigned\", start_bit = 8, length = 16, scale = 1.0, min = 0.0, max = 1.0 }]"
        ))
        .is_err());
        assert!(Catalog::from_toml(&base("period_ms = 10\ncounter = true")).is_err());
        assert!(Catalog::from_toml("not toml [").is_err());
    }

    fn numeric_signals() -> Vec<(u32, SignalSpec)> {
        catalog()
            .messages()
            .iter()
            .flat_map(|m| m.signals.iter().map(move |s| (m.id, s.clone())))
            .filter(|(_, s)| matches!(s.kind, SignalKind::Unsigned { .. }))
            .collect()
    }

    proptest! {
        #[test]
        fn every_numeric_signal_round_trips(pick in any::<prop::sample::Index>(), frac in 0.0f64..=1.0) {
            let sigs = numeric_signals();
            let (id, sig) = pick.get(&sigs);
            let SignalKind::Unsigned { scale, offset, min, max } = sig.kind else { unreachable!() };
            // snap to a representable value inside the range
            let raw_lo = ((min - offset) / scale).round();
            let raw_hi = ((max - offset) / scale).round();
            let raw = (raw_lo + (raw_hi - raw_lo) * frac).floor();
            let v = raw * scale + offset;
            prop_assume!(v >= min && v <= max);
            let mut values = zeros(*id);
            values.insert(sig.name.clone(), PhysicalValue::Number(v));
            let counter = catalog().spec(*id).unwrap().counter_protected.then(AliveCounter::default);
            let p = encode(*id, &values, counter).unwrap();
            prop_assert_eq!(p.len(), usize::from(catalog().spec(*id).unwrap().dlc));
            let back = decode(*id, &p).unwrap();
            let got = back.iter().find(|u| u.name == sig.name).unwrap().value.as_f64().unwrap();
            prop_assert!((got - v).abs() <= scale * 1e-9, "{} {} != {}", sig.name, got, v);
        }

        #[test]
        fn arbitrary_in_range_values_quantize_within_half_a_step(pick in any::<prop::sample::Index>(), frac in 0.0f64..=1.0) {
            let sigs = numeric_signals();
            let (id, sig) = pick.get(&sigs);
            let SignalKind::Unsigned { scale, min, max, .. } = sig.kind else { unreachable!() };
            let v = min + (max - min) * frac;
            let mut values = zeros(*id);
            values.insert(sig.name.clone(), PhysicalValue::Number(v));
            let counter = catalog().spec(*id).unwrap().counter_protected.then(AliveCounter::default);
            let p = encode(*id, &values, counter).unwrap();
            let got = decode(*id, &p).unwrap().into_iter().find(|u| u.name == sig.name).unwrap().value.as_f64().unwrap();
            prop_assert!((got - v).abs() <= scale / 2.0 + 1e-9);
        }

        #[test]
        fn counters_round_trip(c in 0u8..=14) {
            for id in [0x0C0, 0x0D7] {
                let p = encode(id, &BTreeMap::new(), Some(AliveCounter::new(c).unwrap())).unwrap();
                prop_assert_eq!(p[0], 0xF0 | c);
                prop_assert_eq!(catalog().counter_of(id, &p).unwrap(), Some(c));
            }
        }
    }
}
