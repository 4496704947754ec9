//! Fixed-point helpers shared by the engine and the mapper.

/// Arithmetic right shift with round-half-to-even.
pub(crate) fn shift_round_even(value: i64, shift: u32) -> i64 {
    if shift == 0 {
        return value;
    }
    let floor = value >> shift;
    let rem = value - (floor << shift);
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Sign-extend the low `bits` of `raw`.
pub(crate) fn sign_extend(raw: u64, bits: u32) -> i64 {
    if bits >= 64 {
        return raw as i64;
    }
    let shift = 64 - bits;
    ((raw << shift) as i64) >> shift
}

pub(crate) fn fits_signed(value: i64, bits: u32) -> bool {
    let min = -(1i64 << (bits - 1));
    let max = (1i64 << (bits - 1)) - 1;
    (min..=max).contains(&value)
}

pub(crate) fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_ties_to_even() {
        assert_eq!(shift_round_even(2, 2), 0); // 0.5
        assert_eq!(shift_round_even(6, 2), 2); // 1.5
        assert_eq!(shift_round_even(10, 2), 2); // 2.5
        assert_eq!(shift_round_even(-2, 2), 0); // -0.5
        assert_eq!(shift_round_even(-6, 2), -2); // -1.5
        assert_eq!(shift_round_even(-7, 2), -2); // -1.75
        assert_eq!(shift_round_even(7, 0), 7);
    }

    #[test]
    fn sign_extension() {
        assert_eq!(sign_extend(0xF, 4), -1);
        assert_eq!(sign_extend(0x7, 4), 7);
        assert_eq!(sign_extend(0x8000, 16), -32768);
    }
}
