//! Fixed-point quantization of real-valued signals.

use alloc::vec::Vec;

/// Quantized values plus the number that had to be clamped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Quantized {
    pub values: Vec<i64>,
    pub saturated: usize,
}

/// `round_half_even(v * 2^frac_bits)` clamped to a signed `bits`-wide
/// range. NaN maps to zero and counts as saturated.
pub fn quantize(values: &[f64], bits: u32, frac_bits: i32) -> Quantized {
    assert!((1..=63).contains(&bits), "bits must be in 1..=63");
    let hi = (1i64 << (bits - 1)) - 1;
    let lo = -(1i64 << (bits - 1));
    let scale = libm::ldexp(1.0, frac_bits);
    let mut saturated = 0;
    let values = values
        .iter()
        .map(|&v| {
            let r = libm::rint(v * scale);
            if r.is_nan() {
                saturated += 1;
                0
            } else if r > hi as f64 {
                saturated += 1;
                hi
            } else if r < lo as f64 {
                saturated += 1;
                lo
            } else {
                r as i64
            }
        })
        .collect();
    Quantized { values, saturated }
}

pub fn dequantize(values: &[i64], frac_bits: i32) -> Vec<f64> {
    let scale = libm::ldexp(1.0, -frac_bits);
    values.iter().map(|&v| v as f64 * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rounds_half_to_even() {
        let q = quantize(&[0.5, 1.5, 2.5, -0.5, -1.5], 8, 0);
        assert_eq!(q.values, vec![0, 2, 2, 0, -2]);
        assert_eq!(q.saturated, 0);
    }

    #[test]
    fn saturates() {
        let q = quantize(&[1.0, -1.0, 0.99, f64::NAN], 8, 7);
        assert_eq!(q.values, vec![127, -128, 127, 0]);
        assert_eq!(q.saturated, 2);
    }

    #[test]
    fn round_trip_within_half_lsb() {
        let v = [0.123, -0.456, 0.789];
        let q = quantize(&v, 16, 12);
        for (a, b) in dequantize(&q.values, 12).iter().zip(v) {
            assert!(libm::fabs(a - b) <= 0.5 / 4096.0);
        }
    }
}
