//! Hex text forms used in scenario files and the control protocol: ids as
//! `"1A6"` (an optional `0x` prefix is accepted) and payloads as `"F0FF"`.

use serde::{de, Deserialize, Deserializer, Serializer};

pub use crate::frame::{hex_string, parse_hex_bytes};

pub fn parse_id(text: &str) -> Option<u32> {
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text);
    if digits.is_empty() || digits.len() > 8 {
        return None;
    }
    u32::from_str_radix(digits, 16).ok()
}

pub fn id_string(id: u32) -> String {
    format!("{id:03X}")
}

/// `#[serde(with = "crate::hex::id")]`
pub mod id {
    use super::*;

    pub fn serialize<S: Serializer>(id: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&id_string(*id))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        let text = String::deserialize(d)?;
        parse_id(&text).ok_or_else(|| de::Error::custom(format!("`{text}` is not a hex id")))
    }
}

/// `#[serde(with = "crate::hex::bytes")]`
pub mod bytes {
    use super::*;

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex_string(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        parse_hex_bytes(&text).ok_or_else(|| de::Error::custom(format!("`{text}` is not hex bytes")))
    }
}

/// `#[serde(with = "crate::hex::opt_bytes")]`
pub mod opt_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(b: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match b {
            Some(b) => s.serialize_str(&hex_string(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|text| parse_hex_bytes(&text).ok_or_else(|| de::Error::custom(format!("`{text}` is not hex bytes"))))
            .transpose()
    }
}

/// `#[serde(with = "crate::hex::opt_id")]`
pub mod opt_id {
    use super::*;

    pub fn serialize<S: Serializer>(id: &Option<u32>, s: S) -> Result<S::Ok, S::Error> {
        match id {
            Some(id) => s.serialize_str(&id_string(*id)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u32>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|text| parse_id(&text).ok_or_else(|| de::Error::custom(format!("`{text}` is not a hex id"))))
            .transpose()
    }
}
