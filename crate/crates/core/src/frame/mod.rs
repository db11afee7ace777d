//! CAN 2.0A/B frames: validation, bit-level serialization, arbitration and
//! transmission timing.
//!
//! Serialization emits SOF through end-of-frame. The stuffed region runs
//! from SOF through the CRC sequence; CRC delimiter, ACK slot, ACK delimiter
//! and EOF are fixed-form. The ACK slot is emitted recessive and assumed
//! acknowledged. The 3-bit interframe space is not part of the serialized
//! frame but is counted by [`frame_time`].

mod bits;
mod crc;
mod stuff;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use bits::{BitSequence, DOMINANT, RECESSIVE};
pub use crc::{crc15, CRC15_POLY};
pub use stuff::{stuff, unstuff, STUFF_RUN};

use crate::Micros;
use stuff::Destuffer;

pub const MAX_STANDARD_ID: u32 = (1 << 11) - 1;
pub const MAX_EXTENDED_ID: u32 = (1 << 29) - 1;
pub const MAX_DLC: usize = 8;

/// Bits of interframe space that follow every frame.
pub const INTERFRAME_BITS: usize = 3;
/// CRC delimiter + ACK slot + ACK delimiter + 7 EOF bits.
const TRAILER_BITS: usize = 10;
const EOF_BITS: usize = 7;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("identifier {id:#x} does not fit a {} frame", if *.extended { "29-bit extended" } else { "11-bit standard" })]
    IdOutOfRange { id: u32, extended: bool },
    #[error("payload of {0} bytes exceeds the 8-byte CAN limit")]
    DataTooLong(usize),
    #[error("data length code {0} is not in 0..=8")]
    InvalidDlc(u8),
    #[error("stuffing violation: sixth identical bit at position {position}")]
    StuffingViolation { position: usize },
    #[error("CRC mismatch: frame carries {received:#06x}, computed {computed:#06x}")]
    CrcMismatch { received: u16, computed: u16 },
    #[error("bit stream truncated at position {position}")]
    Truncated { position: usize },
    #[error("form error in {field} at position {position}")]
    Form { field: &'static str, position: usize },
    #[error("two transmitters share the arbitration field of id {id:#x}")]
    IdenticalArbitration { id: u32 },
    #[error("malformed frame text {0:?}")]
    Syntax(String),
}

/// One CAN 2.0 frame. Bytes past `dlc` are always zero and remote frames
/// carry a DLC but no data.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CanFrame {
    id: u32,
    extended: bool,
    rtr: bool,
    dlc: u8,
    data: [u8; MAX_DLC],
}

impl CanFrame {
    /// Standard-format data frame.
    pub fn new(id: u32, data: &[u8]) -> Result<Self, CodecError> {
        Self::make(id, data, false, false)
    }

    pub fn new_extended(id: u32, data: &[u8]) -> Result<Self, CodecError> {
        Self::make(id, data, true, false)
    }

    pub fn remote(id: u32, dlc: u8, extended: bool) -> Result<Self, CodecError> {
        check_id(id, extended)?;
        if usize::from(dlc) > MAX_DLC {
            return Err(CodecError::InvalidDlc(dlc));
        }
        Ok(Self {
            id,
            extended,
            rtr: true,
            dlc,
            data: [0; MAX_DLC],
        })
    }

    /// Builds a validated frame. For remote frames the length of `data`
    /// becomes the DLC and the bytes themselves are discarded.
    pub fn make(id: u32, data: &[u8], extended: bool, rtr: bool) -> Result<Self, CodecError> {
        check_id(id, extended)?;
        if data.len() > MAX_DLC {
            return Err(CodecError::DataTooLong(data.len()));
        }
        if rtr {
            return Self::remote(id, data.len() as u8, extended);
        }
        let mut buf = [0; MAX_DLC];
        buf[..data.len()].copy_from_slice(data);
        Ok(Self {
            id,
            extended,
            rtr: false,
            dlc: data.len() as u8,
            data: buf,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    pub fn is_remote(&self) -> bool {
        self.rtr
    }

    pub fn dlc(&self) -> u8 {
        self.dlc
    }

    pub fn data(&self) -> &[u8] {
        if self.rtr {
            &[]
        } else {
            &self.data[..usize::from(self.dlc)]
        }
    }

    /// Same identifier and format with a different payload of equal length.
    pub fn with_data(&self, data: &[u8]) -> Result<Self, CodecError> {
        Self::make(self.id, data, self.extended, self.rtr)
    }
}

impl fmt::Debug for CanFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanFrame({self})")
    }
}

/// candump notation: `130#4500000000`, `1ABCDEF0#00`, `130#R5`.
impl fmt::Display for CanFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.extended {
            write!(f, "{:08X}#", self.id)?;
        } else {
            write!(f, "{:03X}#", self.id)?;
        }
        if self.rtr {
            write!(f, "R{}", self.dlc)
        } else {
            for b in self.data() {
                write!(f, "{b:02X}")?;
            }
            Ok(())
        }
    }
}

impl FromStr for CanFrame {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, CodecError> {
        let syntax = || CodecError::Syntax(s.to_string());
        let (id_text, data_text) = s.split_once('#').ok_or_else(syntax)?;
        let extended = match id_text.len() {
            3 => false,
            8 => true,
            _ => return Err(syntax()),
        };
        let id = u32::from_str_radix(id_text, 16).map_err(|_| syntax())?;
        if let Some(dlc) = data_text.strip_prefix('R') {
            let dlc = if dlc.is_empty() {
                0
            } else {
                dlc.parse::<u8>().map_err(|_| syntax())?
            };
            return CanFrame::remote(id, dlc, extended);
        }
        let data = parse_hex_bytes(data_text).ok_or_else(syntax)?;
        CanFrame::make(id, &data, extended, false)
    }
}

pub fn parse_hex_bytes(text: &str) -> Option<Vec<u8>> {
    if text.len() % 2 != 0 || !text.is_ascii() {
        return None;
    }
    (0..text.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&text[i..i + 2], 16).ok())
        .collect()
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect()
}

fn check_id(id: u32, extended: bool) -> Result<(), CodecError> {
    let max = if extended { MAX_EXTENDED_ID } else { MAX_STANDARD_ID };
    if id > max {
        Err(CodecError::IdOutOfRange { id, extended })
    } else {
        Ok(())
    }
}

/// Free-function form of [`CanFrame::make`].
pub fn make_frame(id: u32, data: &[u8], extended: bool, rtr: bool) -> Result<CanFrame, CodecError> {
    CanFrame::make(id, data, extended, rtr)
}

/// SOF through the last data bit: the CRC-protected, unstuffed prefix.
fn crc_region(frame: &CanFrame) -> BitSequence {
    let mut bits = BitSequence::with_capacity(64 + 8 * MAX_DLC);
    bits.push(DOMINANT); // SOF
    if frame.extended {
        bits.push_field(frame.id >> 18, 11);
        bits.push(RECESSIVE); // SRR
        bits.push(RECESSIVE); // IDE
        bits.push_field(frame.id & 0x3FFFF, 18);
        bits.push(frame.rtr);
        bits.push(DOMINANT); // r1
        bits.push(DOMINANT); // r0
    } else {
        bits.push_field(frame.id, 11);
        bits.push(frame.rtr);
        bits.push(DOMINANT); // IDE
        bits.push(DOMINANT); // r0
    }
    bits.push_field(u32::from(frame.dlc), 4);
    for &byte in frame.data() {
        bits.push_field(u32::from(byte), 8);
    }
    bits
}

/// Frame bits before stuffing, SOF through EOF.
pub fn serialize_unstuffed(frame: &CanFrame) -> BitSequence {
    let mut bits = crc_region(frame);
    let crc = crc15(&bits);
    bits.push_field(u32::from(crc), 15);
    bits.extend_from_slice(&[RECESSIVE; TRAILER_BITS]);
    bits
}

/// Wire bits SOF through EOF, with CRC-15 and stuffing applied.
pub fn serialize(frame: &CanFrame) -> BitSequence {
    let mut region = crc_region(frame).into_inner();
    let crc = crc15(&region);
    region.extend((0..15).rev().map(|s| (crc >> s) & 1 == 1));
    let mut wire = stuff(&region);
    wire.extend_from_slice(&[RECESSIVE; TRAILER_BITS]);
    BitSequence::from(wire)
}

/// Decodes wire bits produced by [`serialize`], re-verifying stuffing,
/// CRC and the fixed-form trailer.
pub fn deserialize(bits: &[bool]) -> Result<CanFrame, CodecError> {
    let mut rx = Destuffer::new(bits);
    let mut region = BitSequence::with_capacity(bits.len());
    let read = |rx: &mut Destuffer<'_>, width: u32, region: &mut BitSequence| {
        let v = rx.next_field(width)?;
        region.push_field(v, width);
        Ok::<u32, CodecError>(v)
    };

    let sof_pos = rx.position();
    if read(&mut rx, 1, &mut region)? != 0 {
        return Err(CodecError::Form {
            field: "start of frame",
            position: sof_pos,
        });
    }
    let base = read(&mut rx, 11, &mut region)?;
    let rtr_or_srr = read(&mut rx, 1, &mut region)? == 1;
    let ide = read(&mut rx, 1, &mut region)? == 1;
    let (id, rtr) = if ide {
        let ext = read(&mut rx, 18, &mut region)?;
        let rtr = read(&mut rx, 1, &mut region)? == 1;
        read(&mut rx, 2, &mut region)?; // r1, r0
        ((base << 18) | ext, rtr)
    } else {
        read(&mut rx, 1, &mut region)?; // r0
        (base, rtr_or_srr)
    };
    let dlc = read(&mut rx, 4, &mut region)? as u8;
    if usize::from(dlc) > MAX_DLC {
        return Err(CodecError::InvalidDlc(dlc));
    }
    let mut data = [0u8; MAX_DLC];
    if !rtr {
        for byte in data.iter_mut().take(usize::from(dlc)) {
            *byte = read(&mut rx, 8, &mut region)? as u8;
        }
    }
    let computed = crc15(&region);
    let received = rx.next_field(15)? as u16;
    rx.consume_pending_stuff()?;

    let trailer_start = rx.position();
    let trailer = bits
        .get(trailer_start..trailer_start + TRAILER_BITS)
        .ok_or(CodecError::Truncated {
            position: bits.len(),
        })?;
    let fixed_ok = |offset: usize| trailer[offset] == RECESSIVE;
    if !fixed_ok(0) {
        return Err(CodecError::Form {
            field: "CRC delimiter",
            position: trailer_start,
        });
    }
    // trailer[1] is the ACK slot: either level is accepted
    if !fixed_ok(2) {
        return Err(CodecError::Form {
            field: "ACK delimiter",
            position: trailer_start + 2,
        });
    }
    if let Some(i) = (3..3 + EOF_BITS).find(|&i| !fixed_ok(i)) {
        return Err(CodecError::Form {
            field: "end of frame",
            position: trailer_start + i,
        });
    }
    if bits.len() != trailer_start + TRAILER_BITS {
        return Err(CodecError::Form {
            field: "trailing bits",
            position: trailer_start + TRAILER_BITS,
        });
    }
    if received != computed {
        return Err(CodecError::CrcMismatch { received, computed });
    }

    Ok(CanFrame {
        id,
        extended: ide,
        rtr,
        dlc,
        data,
    })
}

/// Arbitration field as transmitted: identifier, RTR/SRR and IDE bits.
/// Both formats place IDE at the same offset, so standard and extended
/// frames compare correctly bit by bit.
pub fn arbitration_field(frame: &CanFrame) -> BitSequence {
    let mut bits = BitSequence::with_capacity(32);
    if frame.extended {
        bits.push_field(frame.id >> 18, 11);
        bits.push(RECESSIVE);
        bits.push(RECESSIVE);
        bits.push_field(frame.id & 0x3FFFF, 18);
        bits.push(frame.rtr);
    } else {
        bits.push_field(frame.id, 11);
        bits.push(frame.rtr);
        bits.push(DOMINANT);
    }
    bits
}

/// Integer that orders frames exactly like bitwise arbitration: lower wins.
pub fn arbitration_key(frame: &CanFrame) -> u32 {
    let field = arbitration_field(frame);
    // left-align in 32 bits, padding recessive; the two formats always
    // differ by the IDE bit, so the padding never decides
    let mut key = 0u32;
    for i in 0..32 {
        key = (key << 1) | u32::from(field.get(i).copied().unwrap_or(RECESSIVE));
    }
    key
}

/// Bitwise arbitration between two frames that start transmitting
/// together. Identical arbitration fields cannot be resolved on a real bus.
pub fn arbitration_winner<'a>(a: &'a CanFrame, b: &'a CanFrame) -> Result<&'a CanFrame, CodecError> {
    let fa = arbitration_field(a);
    let fb = arbitration_field(b);
    for (x, y) in fa.iter().zip(fb.iter()) {
        match (x, y) {
            (&DOMINANT, &RECESSIVE) => return Ok(a),
            (&RECESSIVE, &DOMINANT) => return Ok(b),
            _ => {}
        }
    }
    Err(CodecError::IdenticalArbitration { id: a.id })
}

/// Total arbitration order; `Equal` means the frames would collide.
pub fn arbitration_cmp(a: &CanFrame, b: &CanFrame) -> Ordering {
    arbitration_key(a).cmp(&arbitration_key(b))
}

/// Bits the frame occupies on the bus: stuffed frame plus interframe space.
pub fn bus_bits(frame: &CanFrame) -> usize {
    serialize(frame).len() + INTERFRAME_BITS
}

/// Bus occupancy of one frame in whole microseconds (rounded up).
///
/// # Panics
/// If `bitrate` is zero.
pub fn frame_time(frame: &CanFrame, bitrate: u32) -> Micros {
    assert!(bitrate > 0, "bitrate must be positive");
    let bits = bus_bits(frame) as u64;
    (bits * 1_000_000).div_ceil(u64::from(bitrate))
}
