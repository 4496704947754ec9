//! Multi-level DWT analysis bank as stride-2 convolutions.
//!
//! Each level is one `conv-exec` with two kernels (low-pass, high-pass)
//! whose outputs interleave as `[a0, d0, a1, d1, ...]`. The next level
//! reads the approximations in place through the feature-map strides
//! (`row_stride = 4`, `seg_len = 1`, `seg_stride = 2`). Every level region
//! is followed by enough zeros to realize zero extension.

use alloc::format;
use alloc::vec::Vec;

use super::build::{Builder, OnChip};
use super::{invalid, MapError};
use crate::isa::{ConvExec, Instruction, OutBits};
use crate::mac_array::BitwidthConfig;

/// Name of the output tensor holding level `l` (finest is 0).
pub fn level_name(prefix: &str, l: usize) -> alloc::string::String {
    format!("{prefix}dwt_level{l}")
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn emit_levels(
    b: &mut Builder,
    length: usize,
    levels: usize,
    lo: &[i64],
    hi: &[i64],
    shift: u32,
    cfg: BitwidthConfig,
    input: &OnChip,
    prefix: &str,
) -> Result<Vec<OnChip>, MapError> {
    let a = cfg.a_bits.bits();
    if levels == 0 || !length.is_multiple_of(1 << levels) {
        return Err(invalid(format!("DWT length {length} must be divisible by 2^{levels}")));
    }
    if lo.is_empty() || hi.is_empty() || shift > 31 {
        return Err(invalid("DWT needs non-empty filters and shift <= 31"));
    }
    if let Some(&t) = lo.iter().chain(hi).find(|&&t| !cfg.w_bits.contains(t)) {
        return Err(invalid(format!("tap {t} does not fit {} bits", cfg.w_bits.bits())));
    }
    if input.width != a || input.len != length {
        return Err(invalid(format!("DWT input must be {length} elements of {a} bits")));
    }
    let taps = lo.len().max(hi.len());
    if input.region.elem_capacity(a) < input.offset + length + taps {
        return Err(invalid("DWT input lacks zero extension headroom"));
    }
    let mut kernels = alloc::vec![0i64; 2 * taps];
    kernels[..lo.len()].copy_from_slice(lo);
    kernels[taps..taps + hi.len()].copy_from_slice(hi);
    let k = b.constant(format!("{prefix}dwt_filters"), cfg.w_bits, kernels)?;

    let mut out = Vec::with_capacity(levels);
    // (fmap base, row stride, seg len, seg stride) of the current signal
    let mut src = (input.elem_base(), 2u32, taps as u32, 0u32);
    let mut n = length;
    for l in 0..levels {
        let half = n / 2;
        // Interleaved outputs plus zero headroom for the next level's reads.
        let region = b.alloc_elems(level_name(prefix, l), a, 2 * half + 2 * taps)?;
        let base = region.elem_base(a);
        b.push(Instruction::ConvExec(ConvExec {
            fmap_base: src.0 as u32,
            weight_base: k.elem_base() as u32,
            out_base: base as u32,
            out_rows: half as u32,
            out_cols: 2,
            k_len: taps as u32,
            fmap_row_stride: src.1,
            fmap_seg_len: src.2,
            fmap_seg_stride: src.3,
            out_row_stride: 2,
            out_col_stride: 1,
            shift: shift as u8,
            out_bits: OutBits::from(cfg.a_bits),
            relu: false,
        }));
        b.record_shift(format!("{prefix}dwt_level{l}"), shift);
        out.push(OnChip {
            region,
            offset: 0,
            len: 2 * half,
            width: a,
            frac_bits: input.frac_bits,
        });
        src = (base, 4, 1, 2);
        n = half;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn emit(
    b: &mut Builder,
    length: usize,
    levels: usize,
    lo: &[i64],
    hi: &[i64],
    shift: u32,
    cfg: BitwidthConfig,
    input: OnChip,
    prefix: &str,
) -> Result<OnChip, MapError> {
    let mut levels = emit_levels(b, length, levels, lo, hi, shift, cfg, &input, prefix)?;
    let last = levels.pop().expect("at least one level");
    for (l, lv) in levels.iter().enumerate() {
        b.store_output(lv, &level_name(prefix, l))?;
    }
    Ok(last)
}

/// Split interleaved `[a0, d0, a1, d1, ...]` into `(approx, detail)`.
pub fn deinterleave(v: &[i64]) -> (Vec<i64>, Vec<i64>) {
    (
        v.iter().step_by(2).copied().collect(),
        v.iter().skip(1).step_by(2).copied().collect(),
    )
}
