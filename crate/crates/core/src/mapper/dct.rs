//! 8x8 2-D DCT-II as two GEMM passes.
//!
//! Pass 1 computes `U = X C^T` for all blocks in one `conv-exec` (the rows
//! of every block are contiguous). Pass 2 computes `Y = C U` per block by
//! reading `U` column-wise through the feature-map strides and writing
//! the result transposed, so `Y` lands row-major.
//!
//! Coefficients are stored with `w_bits` fractional bits (every entry is
//! below 0.5 in magnitude). The two requantization shifts are chosen from
//! the signal range so that neither the 32-bit accumulators nor the
//! `a_bits` intermediates can overflow.

use alloc::format;
use alloc::vec::Vec;

use super::build::{Builder, OnChip};
use super::quantize::quantize;
use super::{invalid, MapError};
use crate::isa::{ConvExec, Instruction, OutBits};
use crate::mac_array::BitwidthConfig;

pub const DCT_N: usize = 8;

/// Orthonormal DCT-II matrix `C[k][n]`, row-major, quantized to
/// `w_bits` with `w_bits` fractional bits.
pub fn dct_coefficients(w_bits: u32) -> Vec<i64> {
    let n = DCT_N as f64;
    let real: Vec<f64> = (0..DCT_N * DCT_N)
        .map(|i| {
            let (k, j) = (i / DCT_N, i % DCT_N);
            let s = if k == 0 {
                libm::sqrt(1.0 / n)
            } else {
                libm::sqrt(2.0 / n)
            };
            s * libm::cos(core::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2.0 * n))
        })
        .collect();
    quantize(&real, w_bits, w_bits as i32).values
}

/// Default signal range: the activation width, capped so a pass-1
/// accumulator stays within 31 bits.
pub(crate) fn default_input_bits(cfg: BitwidthConfig) -> u32 {
    cfg.a_bits.bits().min(30 - cfg.w_bits.bits())
}

/// `(s1, s2, output fractional bits)`.
pub(crate) fn shifts(cfg: BitwidthConfig, input_bits: u32) -> (u32, u32, i32) {
    let (a, w, inb) = (cfg.a_bits.bits() as i32, cfg.w_bits.bits() as i32, input_bits as i32);
    let s1 = (w + inb - a + 2).max(inb + 2 * w - 28).max(0);
    let s2 = (2 * w - s1 + inb + 4 - a).max(0);
    (s1 as u32, s2 as u32, 2 * w - s1 - s2)
}

pub(crate) fn emit(
    b: &mut Builder,
    blocks: usize,
    input_bits: u32,
    cfg: BitwidthConfig,
    input: OnChip,
    prefix: &str,
) -> Result<OnChip, MapError> {
    let a = cfg.a_bits.bits();
    if blocks == 0 {
        return Err(invalid("DCT needs at least one block"));
    }
    if input_bits == 0 || input_bits > a || input_bits + cfg.w_bits.bits() > 30 {
        return Err(invalid(format!(
            "DCT input range of {input_bits} bits unsupported at {cfg} (needs input + weight bits <= 30)"
        )));
    }
    if input.width != a || input.len != 64 * blocks {
        return Err(invalid(format!(
            "DCT input must be {} elements of {a} bits",
            64 * blocks
        )));
    }
    let (s1, s2, frac) = shifts(cfg, input_bits);
    let c = b.constant(
        format!("{prefix}dct_c"),
        cfg.w_bits,
        dct_coefficients(cfg.w_bits.bits()),
    )?;
    let u = b.alloc_elems(format!("{prefix}dct_u"), a, 64 * blocks)?;
    let y = b.alloc_elems(format!("{prefix}dct_y"), a, 64 * blocks)?;
    let (u_base, y_base) = (u.elem_base(a), y.elem_base(a));
    let out_bits = OutBits::from(cfg.a_bits);
    b.push(Instruction::ConvExec(ConvExec {
        fmap_base: input.elem_base() as u32,
        weight_base: c.elem_base() as u32,
        out_base: u_base as u32,
        out_rows: (8 * blocks) as u32,
        out_cols: 8,
        k_len: 8,
        fmap_row_stride: 8,
        fmap_seg_len: 8,
        fmap_seg_stride: 0,
        out_row_stride: 8,
        out_col_stride: 1,
        shift: s1 as u8,
        out_bits,
        relu: false,
    }));
    for blk in 0..blocks {
        b.push(Instruction::ConvExec(ConvExec {
            fmap_base: (u_base + 64 * blk) as u32,
            weight_base: c.elem_base() as u32,
            out_base: (y_base + 64 * blk) as u32,
            out_rows: 8,
            out_cols: 8,
            k_len: 8,
            fmap_row_stride: 1,
            fmap_seg_len: 1,
            fmap_seg_stride: 8,
            out_row_stride: 1,
            out_col_stride: 8,
            shift: s2 as u8,
            out_bits,
            relu: false,
        }));
    }
    b.record_shift(format!("{prefix}dct_pass1"), s1);
    b.record_shift(format!("{prefix}dct_pass2"), s2);
    Ok(OnChip {
        region: y,
        offset: 0,
        len: 64 * blocks,
        width: a,
        frac_bits: input.frac_bits + frac,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac_array::Width;

    #[test]
    fn coefficients_fit_and_are_close() {
        for w in [4u32, 8, 16] {
            let c = dct_coefficients(w);
            let lim = 1i64 << (w - 1);
            assert!(c.iter().all(|v| (-lim..lim).contains(v)));
        }
        let c = dct_coefficients(16);
        let dc = c[0] as f64 / 65536.0;
        assert!(libm::fabs(dc - libm::sqrt(0.125)) < 1e-4);
    }

    #[test]
    fn shift_choice() {
        let cfg = BitwidthConfig::new(Width::W16, Width::W8);
        assert_eq!(shifts(cfg, 8), (2, 10, 4));
        let cfg = BitwidthConfig::square(Width::W8);
        assert_eq!(shifts(cfg, 8), (10, 10, -4));
    }
}
