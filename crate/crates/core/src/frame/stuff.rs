//! Bit stuffing: a complement bit after every run of five identical bits.

use super::CodecError;

/// Length of a run that forces a stuff bit.
pub const STUFF_RUN: usize = 5;

/// Inserts a complement bit after every run of [`STUFF_RUN`] identical bits.
/// The stuff bit itself starts the next run.
pub fn stuff(bits: &[bool]) -> Vec<bool> {
    let mut out = Vec::with_capacity(bits.len() + bits.len() / 4 + 1);
    let mut last = None;
    let mut run = 0usize;
    for &bit in bits {
        out.push(bit);
        if Some(bit) == last {
            run += 1;
        } else {
            last = Some(bit);
            run = 1;
        }
        if run == STUFF_RUN {
            out.push(!bit);
            last = Some(!bit);
            run = 1;
        }
    }
    out
}

/// Removes stuff bits inserted by [`stuff`].
pub fn unstuff(bits: &[bool]) -> Result<Vec<bool>, CodecError> {
    let mut reader = Destuffer::new(bits);
    let mut out = Vec::with_capacity(bits.len());
    while reader.position() < bits.len() {
        if reader.stuff_pending() {
            reader.consume_pending_stuff()?;
        } else {
            out.push(reader.next_bit()?);
        }
    }
    Ok(out)
}

/// Streaming destuffer over a stuffed region, used by the frame decoder
/// where the region length is only known after the DLC has been read.
pub(crate) struct Destuffer<'a> {
    raw: &'a [bool],
    pos: usize,
    last: Option<bool>,
    run: usize,
}

impl<'a> Destuffer<'a> {
    pub(crate) fn new(raw: &'a [bool]) -> Self {
        Self {
            raw,
            pos: 0,
            last: None,
            run: 0,
        }
    }

    /// Raw position of the next unread bit.
    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    fn stuff_pending(&self) -> bool {
        self.run == STUFF_RUN
    }

    fn raw_bit(&mut self) -> Result<bool, CodecError> {
        let bit = *self
            .raw
            .get(self.pos)
            .ok_or(CodecError::Truncated { position: self.pos })?;
        self.pos += 1;
        Ok(bit)
    }

    /// Consumes the stuff bit owed after a completed run, if any.
    pub(crate) fn consume_pending_stuff(&mut self) -> Result<(), CodecError> {
        if self.run == STUFF_RUN {
            let position = self.pos;
            let bit = self.raw_bit()?;
            if Some(bit) == self.last {
                return Err(CodecError::StuffingViolation { position });
            }
            self.last = Some(bit);
            self.run = 1;
        }
        Ok(())
    }

    pub(crate) fn next_bit(&mut self) -> Result<bool, CodecError> {
        self.consume_pending_stuff()?;
        let bit = self.raw_bit()?;
        if Some(bit) == self.last {
            self.run += 1;
        } else {
            self.last = Some(bit);
            self.run = 1;
        }
        Ok(bit)
    }

    pub(crate) fn next_field(&mut self, width: u32) -> Result<u32, CodecError> {
        let mut value = 0u32;
        for _ in 0..width {
            value = (value << 1) | u32::from(self.next_bit()?);
        }
        Ok(value)
    }
}
