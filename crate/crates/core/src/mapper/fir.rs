//! FIR filter as a one-kernel 1-D convolution.
//!
//! The signal is the feature map (preceded by `taps - 1` zeros of history)
//! and the reversed impulse response is the single kernel, so output row
//! `n` is `sum_k h[taps-1-k] * xp[n+k] = sum_k h[k] x[n-k]`.

use alloc::format;
use alloc::vec::Vec;

use super::build::{Builder, OnChip};
use super::{invalid, MapError};
use crate::isa::{ConvExec, Instruction, OutBits};
use crate::mac_array::BitwidthConfig;

#[allow(clippy::too_many_arguments)]
pub(crate) fn emit(
    b: &mut Builder,
    taps: &[i64],
    length: usize,
    shift: u32,
    out_bits: u32,
    cfg: BitwidthConfig,
    input: OnChip,
    prefix: &str,
) -> Result<OnChip, MapError> {
    if taps.is_empty() || length < taps.len() {
        return Err(invalid(format!(
            "FIR needs 1 <= taps <= length, got {} taps, length {length}",
            taps.len()
        )));
    }
    if let Some(&h) = taps.iter().find(|&&h| !cfg.w_bits.contains(h)) {
        return Err(invalid(format!("tap {h} does not fit {} bits", cfg.w_bits.bits())));
    }
    let out_bits = OutBits::new(out_bits).ok_or_else(|| invalid(format!("unsupported output width {out_bits}")))?;
    if shift > 31 {
        return Err(invalid("shift must be at most 31"));
    }
    if input.len != length || input.width != cfg.a_bits.bits() {
        return Err(invalid(format!(
            "FIR input must be {length} elements of {} bits",
            cfg.a_bits.bits()
        )));
    }
    let history = taps.len() - 1;
    if input.offset < history {
        return Err(invalid("FIR input needs zero history before the signal"));
    }
    let kernel: Vec<i64> = taps.iter().rev().copied().collect();
    let h = b.constant(format!("{prefix}h"), cfg.w_bits, kernel)?;
    let out = b.alloc_elems(format!("{prefix}fir_out"), out_bits.bits(), length)?;
    b.push(Instruction::ConvExec(ConvExec {
        fmap_base: (input.elem_base() - history) as u32,
        weight_base: h.elem_base() as u32,
        out_base: out.elem_base(out_bits.bits()) as u32,
        out_rows: length as u32,
        out_cols: 1,
        k_len: taps.len() as u32,
        fmap_row_stride: 1,
        fmap_seg_len: taps.len() as u32,
        fmap_seg_stride: 0,
        out_row_stride: 1,
        out_col_stride: 1,
        shift: shift as u8,
        out_bits,
        relu: false,
    }));
    b.record_shift(format!("{prefix}fir"), shift);
    Ok(OnChip {
        region: out,
        offset: 0,
        len: length,
        width: out_bits.bits(),
        frac_bits: input.frac_bits - shift as i32,
    })
}
