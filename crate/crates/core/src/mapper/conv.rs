//! Convolution layers (HWC activations, `[M][K][K][C]` weights, valid
//! padding).
//!
//! One `conv-exec` per output row: the `Wo` output pixels are the rows of
//! the instruction, the `M` kernels its columns (the array processes eight
//! at a time), and the `K*K*C` window is gathered through the feature-map
//! strides (`row_stride = stride*C`, `seg_len = K*C`, `seg_stride = W*C`).
//! Layers whose working set exceeds the on-chip buffer are processed in
//! bands of output rows with `load-tile`/`store-tile` per band.

use alloc::format;
use alloc::vec::Vec;

use super::build::{Builder, OnChip};
use super::{invalid, MapError, Role};
use crate::isa::{ConvExec, Instruction, OutBits};
use crate::mac_array::BitwidthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Padding {
    Valid,
    Same,
}

/// One convolution layer. Empty `weights` makes them a run-time input
/// named `weights`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvLayer {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub m: usize,
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub stride: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub shift: u32,
    #[cfg_attr(feature = "serde", serde(default))]
    pub relu: bool,
    #[cfg_attr(feature = "serde", serde(default = "thirty_two"))]
    pub out_bits: u32,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Vec::is_empty"))]
    pub weights: Vec<i64>,
}

#[cfg(feature = "serde")]
fn one() -> usize {
    1
}

#[cfg(feature = "serde")]
fn thirty_two() -> u32 {
    32
}

impl ConvLayer {
    pub fn new(h: usize, w: usize, c: usize, k: usize, m: usize) -> Self {
        ConvLayer {
            h,
            w,
            c,
            k,
            m,
            stride: 1,
            shift: 0,
            relu: false,
            out_bits: 32,
            weights: Vec::new(),
        }
    }

    pub fn out_h(&self) -> usize {
        (self.h - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w - self.k) / self.stride + 1
    }

    pub fn k_len(&self) -> usize {
        self.k * self.k * self.c
    }

    pub fn weight_len(&self) -> usize {
        self.m * self.k_len()
    }

    pub fn out_len(&self) -> usize {
        self.out_h() * self.out_w() * self.m
    }

    pub fn mult_adds(&self) -> u64 {
        (self.out_len() * self.k_len()) as u64
    }

    fn validate(&self, cfg: BitwidthConfig) -> Result<OutBits, MapError> {
        if self.h == 0 || self.w == 0 || self.c == 0 || self.m == 0 || self.k == 0 || self.stride == 0 {
            return Err(invalid("convolution dimensions must be positive"));
        }
        if self.k > self.h || self.k > self.w {
            return Err(invalid(format!(
                "kernel {k}x{k} larger than input {}x{}",
                self.h,
                self.w,
                k = self.k
            )));
        }
        if self.shift > 31 {
            return Err(invalid("shift must be at most 31"));
        }
        if !self.weights.is_empty() {
            if self.weights.len() != self.weight_len() {
                return Err(invalid(format!(
                    "expected {} weights, got {}",
                    self.weight_len(),
                    self.weights.len()
                )));
            }
            if let Some(&v) = self.weights.iter().find(|&&v| !cfg.w_bits.contains(v)) {
                return Err(invalid(format!("weight {v} does not fit {} bits", cfg.w_bits.bits())));
            }
        }
        OutBits::new(self.out_bits).ok_or_else(|| invalid(format!("unsupported output width {}", self.out_bits)))
    }
}

/// Output rows per band: the smallest count whose output slice is whole
/// words.
fn row_quantum(l: &ConvLayer, out_bits: u32) -> usize {
    let row_bits = l.out_w() * l.m * out_bits as usize;
    let mut q = 1;
    while !(q * row_bits).is_multiple_of(64) {
        q += 1;
    }
    q
}

fn weights_onchip(b: &mut Builder, l: &ConvLayer, cfg: BitwidthConfig, prefix: &str) -> Result<OnChip, MapError> {
    if l.weights.is_empty() {
        let bits = cfg.w_bits.bits();
        let t = b.tensor(
            format!("{prefix}weights"),
            Role::Input,
            bits,
            l.weight_len(),
            0,
            Vec::new(),
        );
        let region = b.alloc_elems(format!("{prefix}weights"), bits, l.weight_len())?;
        b.load(&t, region.word_start);
        Ok(OnChip {
            region,
            offset: 0,
            len: l.weight_len(),
            width: bits,
            frac_bits: 0,
        })
    } else {
        b.constant(format!("{prefix}weights"), cfg.w_bits, l.weights.clone())
    }
}

/// Emit output rows `rows` reading activations whose row `rows.start *
/// stride` sits at element `in_base`, writing row `rows.start` at
/// `out_base`.
fn emit_rows(
    b: &mut Builder,
    l: &ConvLayer,
    out_bits: OutBits,
    rows: core::ops::Range<usize>,
    in_base: usize,
    weight_base: usize,
    out_base: usize,
) {
    let (wo, m, c) = (l.out_w(), l.m, l.c);
    for (i, _) in rows.enumerate() {
        b.push(Instruction::ConvExec(ConvExec {
            fmap_base: (in_base + i * l.stride * l.w * c) as u32,
            weight_base: weight_base as u32,
            out_base: (out_base + i * wo * m) as u32,
            out_rows: wo as u32,
            out_cols: m as u32,
            k_len: l.k_len() as u32,
            fmap_row_stride: (l.stride * c) as u32,
            fmap_seg_len: (l.k * c) as u32,
            fmap_seg_stride: (l.w * c) as u32,
            out_row_stride: m as u32,
            out_col_stride: 1,
            shift: l.shift as u8,
            out_bits,
            relu: l.relu,
        }));
    }
}

/// The layer with its input already on chip; the result stays on chip.
pub(crate) fn emit_resident(
    b: &mut Builder,
    l: &ConvLayer,
    cfg: BitwidthConfig,
    input: OnChip,
    prefix: &str,
) -> Result<OnChip, MapError> {
    let out_bits = l.validate(cfg)?;
    if input.width != cfg.a_bits.bits() || input.len != l.h * l.w * l.c {
        return Err(invalid(format!(
            "convolution input must be {} elements of {} bits",
            l.h * l.w * l.c,
            cfg.a_bits.bits()
        )));
    }
    let wts = weights_onchip(b, l, cfg, prefix)?;
    let out = b.alloc_elems(format!("{prefix}conv_out"), out_bits.bits(), l.out_len())?;
    emit_rows(
        b,
        l,
        out_bits,
        0..l.out_h(),
        input.elem_base(),
        wts.elem_base(),
        out.elem_base(out_bits.bits()),
    );
    b.record_shift(format!("{prefix}conv"), l.shift);
    Ok(OnChip {
        region: out,
        offset: 0,
        len: l.out_len(),
        width: out_bits.bits(),
        frac_bits: input.frac_bits - l.shift as i32,
    })
}

/// Stand-alone layer: input `x`, output `y` off chip.
pub(crate) fn map_layer(b: &mut Builder, l: &ConvLayer, cfg: BitwidthConfig) -> Result<(), MapError> {
    let out_bits = l.validate(cfg)?;
    b.set_bitwidth(cfg);
    let (a, w, o) = (
        cfg.a_bits.bits() as usize,
        cfg.w_bits.bits() as usize,
        out_bits.bits() as usize,
    );
    let words = |elems: usize, bits: usize| (elems * bits).div_ceil(64);
    let in_len = l.h * l.w * l.c;
    let resident = words(in_len, a) + words(l.weight_len(), w) + words(l.out_len(), o);
    if resident <= b.free_words() {
        let x = b.tensor("x", Role::Input, a as u32, in_len, 0, Vec::new());
        let region = b.alloc_elems("x", a as u32, in_len)?;
        b.load(&x, region.word_start);
        let input = OnChip {
            region,
            offset: 0,
            len: in_len,
            width: a as u32,
            frac_bits: 0,
        };
        let out = emit_resident(b, l, cfg, input, "")?;
        return b.store_output(&out, "y");
    }

    // Banded schedule.
    let x = b.tensor("x", Role::Input, a as u32, in_len, 0, Vec::new());
    let y = b.tensor("y", Role::Output, o as u32, l.out_len(), 0, Vec::new());
    let wts = weights_onchip(b, l, cfg, "")?;
    let q = row_quantum(l, o as u32);
    let row_in = l.w * l.c;
    let row_out = l.out_w() * l.m;
    let per_word_a = 64 / a;
    let band_words = |rows: usize| {
        let in_rows = (rows - 1) * l.stride + l.k;
        words(in_rows * row_in, a) + 1 + words(rows * row_out, o)
    };
    let free = b.free_words();
    let mut band = 0;
    let mut r = q;
    while r <= l.out_h().next_multiple_of(q) && band_words(r) <= free {
        band = r;
        r += q;
    }
    if band == 0 {
        return Err(MapError::Capacity {
            need: band_words(q),
            free,
        });
    }
    let band = band.min(l.out_h().next_multiple_of(q));
    let in_rows_max = (band - 1) * l.stride + l.k;
    let in_region = b.alloc("x_band", words(in_rows_max * row_in, a) + 1)?;
    let out_region = b.alloc_elems("y_band", o as u32, band * row_out)?;
    let in_words_total = words(in_len, a);
    let out_words_total = words(l.out_len(), o);
    let mut oy = 0;
    while oy < l.out_h() {
        let rows = band.min(l.out_h() - oy);
        let first_elem = oy * l.stride * row_in;
        let last_elem = ((oy + rows - 1) * l.stride + l.k) * row_in;
        let first_word = first_elem / per_word_a;
        let n_words = last_elem.div_ceil(per_word_a).min(in_words_total) - first_word;
        b.load_words(&x, first_word, n_words, in_region.word_start);
        let in_base = in_region.elem_base(a as u32) + first_elem - first_word * per_word_a;
        emit_rows(
            b,
            l,
            out_bits,
            oy..oy + rows,
            in_base,
            wts.elem_base(),
            out_region.elem_base(o as u32),
        );
        let out_first = oy * row_out * o / 64;
        let out_words = words((oy + rows) * row_out, o).min(out_words_total) - out_first;
        b.store_words(&y, out_first, out_words, out_region.word_start);
        oy += rows;
    }
    b.record_shift("conv", l.shift);
    Ok(())
}
