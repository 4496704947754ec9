//! Radix-2 DIT FFT as a sequence of small convolutions.
//!
//! Stage `s` has `half = 2^s` twiddle groups of `G = n / (2 half)`
//! butterflies each. For twiddle group `j` one `conv-exec` computes, for
//! every butterfly `g` of the group, the four outputs
//! `[Re p', Im p', Re q', Im q']` as dot products of the butterfly-factor
//! rows
//!
//! ```text
//! [1, 0,  wr, -wi]
//! [0, 1,  wi,  wr]
//! [1, 0, -wr,  wi]
//! [0, 1, -wi, -wr]
//! ```
//!
//! (feature-map role, 1.0 = `2^(bits-2)`) with the kernel `[pr, pi, qr, qi]`
//! (signal in the kernel role). The shift of `bits - 1` divides by two per
//! stage, so the result is `DFT(x) / n`.
//!
//! Kernel and output buffers share one layout: butterfly `(j, g)` owns the
//! four elements starting at `4 (j G + g)`. Between stages the shuffling
//! fabric permutes the output of stage `s` into the kernel layout of stage
//! `s + 1`; bit reversal is folded into the first permutation and the
//! final permutation restores natural order. The factor rows of each stage
//! are assembled from a per-twiddle table `[wr, wi, -wr, -wi]` by the
//! shuffling fabric, with the padding unit supplying the constants.

use alloc::format;
use alloc::vec::Vec;

use super::build::{Builder, OnChip};
use super::shuffle::Slot;
use super::{invalid, MapError};
use crate::isa::{ConvExec, Instruction, OutBits};
use crate::mac_array::BitwidthConfig;
use crate::reference::ComplexVec;

pub const MAX_POINTS: usize = 4096;

/// One entry of a butterfly-factor row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coef {
    One,
    Zero,
    /// Element of the twiddle table entry `[wr, wi, -wr, -wi]`.
    Table(usize),
}

const ROWS: [[Coef; 4]; 4] = {
    use Coef::*;
    [
        [One, Zero, Table(0), Table(3)],
        [Zero, One, Table(1), Table(0)],
        [One, Zero, Table(2), Table(1)],
        [Zero, One, Table(3), Table(2)],
    ]
};

/// Stage geometry of an `n`-point transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FftSchedule {
    pub n: usize,
}

impl FftSchedule {
    pub fn new(n: usize) -> Result<Self, MapError> {
        if !n.is_power_of_two() || !(2..=MAX_POINTS).contains(&n) {
            return Err(invalid(format!(
                "FFT size {n} must be a power of two in 2..={MAX_POINTS}"
            )));
        }
        Ok(FftSchedule { n })
    }

    pub fn stages(&self) -> usize {
        self.n.trailing_zeros() as usize
    }

    /// Butterflies per twiddle group in stage `s`.
    pub fn group_size(&self, s: usize) -> usize {
        self.n >> (s + 1)
    }

    /// Complex slot (pairs of elements) holding signal index `i` in the
    /// kernel/output layout of stage `s`.
    pub fn slot(&self, s: usize, i: usize) -> usize {
        let half = 1 << s;
        let span = 2 * half;
        let g = i / span;
        let within = i % span;
        let (j, which) = if within < half { (within, 0) } else { (within - half, 1) };
        (j * self.group_size(s) + g) * 2 + which
    }

    /// Twiddle exponent (over `n`) used by group `j` of stage `s`.
    pub fn twiddle_index(&self, s: usize, j: usize) -> usize {
        j * self.group_size(s)
    }

    /// Source complex index feeding kernel slot `dst` of stage `s`:
    /// for `s == 0` an index into the natural-order input, otherwise a
    /// slot of the previous stage's output.
    pub fn kernel_sources(&self, s: usize) -> Vec<usize> {
        let mut src = alloc::vec![0; self.n];
        for i in 0..self.n {
            let from = if s == 0 {
                bit_reverse(i, self.stages())
            } else {
                self.slot(s - 1, i)
            };
            src[self.slot(s, i)] = from;
        }
        src
    }

    /// Output slot of the last stage holding natural-order index `i`.
    pub fn final_sources(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.slot(self.stages() - 1, i)).collect()
    }

    /// Floating-point walk of the exact schedule the mapper emits (same
    /// permutations, grouping and factor rows, exact twiddles).
    pub fn evaluate_f64(&self, x: &ComplexVec) -> ComplexVec {
        assert_eq!(x.len(), self.n);
        let n = self.n;
        let mut buf: Vec<(f64, f64)> = (0..n).map(|i| (x.re[i], x.im[i])).collect();
        for s in 0..self.stages() {
            let src = self.kernel_sources(s);
            let kernel: Vec<(f64, f64)> = src.iter().map(|&k| buf[k]).collect();
            let g_size = self.group_size(s);
            let mut out = alloc::vec![(0.0, 0.0); n];
            for j in 0..(1 << s) {
                let ang = 2.0 * core::f64::consts::PI * self.twiddle_index(s, j) as f64 / n as f64;
                let (wr, wi) = (libm::cos(ang), -libm::sin(ang));
                let entry = [wr, wi, -wr, -wi];
                let coef = |c: Coef| match c {
                    Coef::One => 1.0,
                    Coef::Zero => 0.0,
                    Coef::Table(k) => entry[k],
                };
                for g in 0..g_size {
                    let b = j * g_size + g;
                    let k = [
                        kernel[2 * b].0,
                        kernel[2 * b].1,
                        kernel[2 * b + 1].0,
                        kernel[2 * b + 1].1,
                    ];
                    let r: Vec<f64> = ROWS
                        .iter()
                        .map(|row| row.iter().zip(&k).map(|(&c, v)| coef(c) * v).sum::<f64>() / 2.0)
                        .collect();
                    out[2 * b] = (r[0], r[1]);
                    out[2 * b + 1] = (r[2], r[3]);
                }
            }
            buf = out;
        }
        let fin = self.final_sources();
        ComplexVec::new(
            fin.iter().map(|&k| buf[k].0).collect(),
            fin.iter().map(|&k| buf[k].1).collect(),
        )
    }
}

fn bit_reverse(i: usize, bits: usize) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS as usize - bits)
    }
}

fn round_even(x: f64) -> i64 {
    let f = libm::floor(x);
    let d = x - f;
    let f = f as i64;
    if d > 0.5 || (d == 0.5 && f & 1 == 1) {
        f + 1
    } else {
        f
    }
}

/// Twiddles `e^{-2 pi i k / n}` for `k < n/2` with `bits - 2` fractional
/// bits.
pub fn fft_twiddles(n: usize, bits: u32) -> Vec<(i64, i64)> {
    let scale = (1i64 << (bits - 2)) as f64;
    (0..n / 2)
        .map(|k| {
            let ang = 2.0 * core::f64::consts::PI * k as f64 / n as f64;
            (round_even(libm::cos(ang) * scale), round_even(-libm::sin(ang) * scale))
        })
        .collect()
}

/// Interleaved `[re, im, ...]` elements as complex pairs.
pub fn fft_output_from_elements(v: &[i64]) -> Vec<(i64, i64)> {
    v.chunks_exact(2).map(|c| (c[0], c[1])).collect()
}

fn complex_gather(src_base: usize, sources: &[usize]) -> Vec<Slot> {
    sources
        .iter()
        .flat_map(|&c| [Slot::Elem(src_base + 2 * c), Slot::Elem(src_base + 2 * c + 1)])
        .collect()
}

pub(crate) fn emit(
    b: &mut Builder,
    n: usize,
    twiddles: Option<&[(i64, i64)]>,
    cfg: BitwidthConfig,
    input: OnChip,
    prefix: &str,
) -> Result<OnChip, MapError> {
    let sched = FftSchedule::new(n)?;
    if cfg.a_bits != cfg.w_bits {
        return Err(invalid("FFT needs equal activation and weight widths"));
    }
    let bits = cfg.a_bits.bits();
    if input.width != bits || input.len != 2 * n {
        return Err(invalid(format!("FFT input must be {} elements of {bits} bits", 2 * n)));
    }
    let frac = bits - 2;
    let one = 1u16 << frac;
    let table: Vec<(i64, i64)> = match twiddles {
        Some(t) if t.len() != n / 2 => return Err(invalid(format!("twiddle table needs {} entries", n / 2))),
        Some(t) => t.to_vec(),
        None => fft_twiddles(n, bits),
    };
    let lim = 1i64 << (bits - 1);
    if table
        .iter()
        .any(|&(r, i)| [r, i, -r, -i].iter().any(|v| !(-lim..lim).contains(v)))
    {
        return Err(invalid("twiddle out of range"));
    }
    let table_data: Vec<i64> = table.iter().flat_map(|&(r, i)| [r, i, -r, -i]).collect();
    let table = b.constant(format!("{prefix}twiddles"), cfg.w_bits, table_data)?;

    let kernel = b.alloc_elems(format!("{prefix}fft_kernel"), bits, 2 * n)?;
    let output = b.alloc_elems(format!("{prefix}fft_out"), bits, 2 * n)?;
    let rows = b.alloc_elems(format!("{prefix}fft_rows"), bits, 16 * (n / 2))?;
    let result = if input.offset == 0 {
        input.region.clone()
    } else {
        b.alloc_elems(format!("{prefix}fft_result"), bits, 2 * n)?
    };

    let k_base = kernel.elem_base(bits);
    let o_base = output.elem_base(bits);
    let r_base = rows.elem_base(bits);
    let t_base = table.elem_base();

    for s in 0..sched.stages() {
        let (src_base, sources) = if s == 0 {
            (input.elem_base(), sched.kernel_sources(0))
        } else {
            (o_base, sched.kernel_sources(s))
        };
        b.gather(bits, kernel.word_start, &complex_gather(src_base, &sources))?;

        let half = 1 << s;
        let mut row_slots = Vec::with_capacity(16 * half);
        for j in 0..half {
            let t = sched.twiddle_index(s, j);
            for row in &ROWS {
                row_slots.extend(row.iter().map(|c| match *c {
                    Coef::One => Slot::Const(one),
                    Coef::Zero => Slot::Const(0),
                    Coef::Table(k) => Slot::Elem(t_base + 4 * t + k),
                }));
            }
        }
        b.gather(bits, rows.word_start, &row_slots)?;

        let g_size = sched.group_size(s);
        for j in 0..half {
            b.push(Instruction::ConvExec(ConvExec {
                fmap_base: (r_base + 16 * j) as u32,
                weight_base: (k_base + 4 * j * g_size) as u32,
                out_base: (o_base + 4 * j * g_size) as u32,
                out_rows: 4,
                out_cols: g_size as u32,
                k_len: 4,
                fmap_row_stride: 4,
                fmap_seg_len: 4,
                fmap_seg_stride: 0,
                out_row_stride: 1,
                out_col_stride: 4,
                shift: (frac + 1) as u8,
                out_bits: OutBits::from(cfg.a_bits),
                relu: false,
            }));
        }
        b.record_shift(format!("{prefix}fft_stage{s}"), frac + 1);
    }
    b.gather(bits, result.word_start, &complex_gather(o_base, &sched.final_sources()))?;
    Ok(OnChip {
        region: result,
        offset: 0,
        len: 2 * n,
        width: bits,
        frac_bits: input.frac_bits,
    })
}
