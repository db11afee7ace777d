//! CAN CRC-15.

/// Generator x^15 + x^14 + x^10 + x^8 + x^7 + x^4 + x^3 + 1, without the x^15 term.
pub const CRC15_POLY: u16 = 0x4599;

const MASK: u16 = 0x7FFF;

/// Runs the CAN CRC-15 shift register over `bits`, starting from zero.
pub fn crc15(bits: &[bool]) -> u16 {
    bits.iter().fold(0u16, |reg, &bit| {
        let feedback = bit ^ ((reg >> 14) & 1 == 1);
        let shifted = (reg << 1) & MASK;
        if feedback {
            shifted ^ CRC15_POLY
        } else {
            shifted
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_leaves_register_zero() {
        assert_eq!(crc15(&[]), 0);
    }

    #[test]
    fn single_one_bit_loads_polynomial() {
        assert_eq!(crc15(&[true]), 0x4599);
    }

    #[test]
    fn leading_zeros_do_not_change_remainder() {
        let bits = [true, false, true, true, false, false, true];
        let mut padded = vec![false; 9];
        padded.extend_from_slice(&bits);
        assert_eq!(crc15(&bits), crc15(&padded));
    }

    #[test]
    fn appending_crc_yields_zero_remainder() {
        let bits = [true, true, false, true, false, false, false, true, true];
        let crc = crc15(&bits);
        let mut with_crc = bits.to_vec();
        with_crc.extend((0..15).rev().map(|s| (crc >> s) & 1 == 1));
        assert_eq!(crc15(&with_crc), 0);
    }
}
