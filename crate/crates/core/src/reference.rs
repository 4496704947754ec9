//! Naive scalar oracles.
//!
//! Nothing here calls into the simulator, the multiplier model or the
//! mapper; rounding and packing helpers are duplicated on purpose.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Complex vector as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexVec {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVec {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Self {
        assert_eq!(re.len(), im.len(), "real and imaginary lengths differ");
        ComplexVec { re, im }
    }

    pub fn zeros(n: usize) -> Self {
        ComplexVec {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        ComplexVec {
            re: self.re.iter().map(|v| v * s).collect(),
            im: self.im.iter().map(|v| v * s).collect(),
        }
    }
}

/// `X[k] = sum_j x[j] e^{-2 pi i k j / N}`, O(N^2).
pub fn dft(x: &ComplexVec) -> ComplexVec {
    let n = x.len();
    let mut out = ComplexVec::zeros(n);
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for j in 0..n {
            let ang = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
            let (s, c) = (libm::sin(ang), libm::cos(ang));
            sr += x.re[j] * c - x.im[j] * s;
            si += x.re[j] * s + x.im[j] * c;
        }
        out.re[k] = sr;
        out.im[k] = si;
    }
    out
}

/// Relative RMS error `||a - b|| / ||b||` over both components.
pub fn relative_rms(a: &ComplexVec, b: &ComplexVec) -> f64 {
    let err: f64 =
        a.re.iter()
            .zip(&b.re)
            .chain(a.im.iter().zip(&b.im))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
    let norm = b.energy();
    if norm == 0.0 {
        libm::sqrt(err)
    } else {
        libm::sqrt(err / norm)
    }
}

/// Relative RMS error of two real sequences.
pub fn relative_rms_real(a: &[f64], b: &[f64]) -> f64 {
    let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let norm: f64 = b.iter().map(|y| y * y).sum();
    if norm == 0.0 {
        libm::sqrt(err)
    } else {
        libm::sqrt(err / norm)
    }
}

/// `y[n] = sum_k h[k] x[n-k]` with zero history, `len(y) == len(x)`.
pub fn fir(x: &[i64], h: &[i64]) -> Vec<i64> {
    (0..x.len())
        .map(|n| {
            h.iter()
                .enumerate()
                .filter(|&(k, _)| k <= n)
                .map(|(k, &hk)| hk * x[n - k])
                .sum()
        })
        .collect()
}

/// Exact product of two integers given their declared widths.
pub fn full_width_mul(a: i64, w: i64, a_bits: u32, w_bits: u32) -> i64 {
    debug_assert!(a_bits <= 32 && w_bits <= 32);
    ((a as i128) * (w as i128)) as i64
}

/// Orthonormal DCT-II coefficient `C[k][n]` for size `n_len`.
pub fn dct_coefficient(k: usize, n: usize, n_len: usize) -> f64 {
    let scale = if k == 0 {
        libm::sqrt(1.0 / n_len as f64)
    } else {
        libm::sqrt(2.0 / n_len as f64)
    };
    scale * libm::cos(PI * (2 * n + 1) as f64 * k as f64 / (2 * n_len) as f64)
}

/// Orthonormal 2-D DCT-II of a row-major 8x8 block: `Y = C X C^T`.
pub fn dct2d(block: &[f64; 64]) -> [f64; 64] {
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    s += dct_coefficient(u, i, 8) * dct_coefficient(v, j, 8) * block[i * 8 + j];
                }
            }
            out[u * 8 + v] = s;
        }
    }
    out
}

/// Coefficient sets of a multi-level DWT.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DwtBands<T> {
    /// Detail coefficients, finest level first.
    pub details: Vec<Vec<T>>,
    /// Final approximation.
    pub approx: Vec<T>,
}

/// Analysis filter bank in correlation form, zero extension:
/// `lo_out[i] = sum_k lo[k] x[2i + k]`.
pub fn dwt(x: &[f64], lo: &[f64], hi: &[f64], levels: usize) -> DwtBands<f64> {
    let filt = |x: &[f64], f: &[f64]| -> Vec<f64> {
        (0..x.len() / 2)
            .map(|i| {
                f.iter()
                    .enumerate()
                    .filter_map(|(k, c)| x.get(2 * i + k).map(|v| c * v))
                    .sum()
            })
            .collect()
    };
    let mut bands = DwtBands::default();
    let mut a = x.to_vec();
    for _ in 0..levels {
        bands.details.push(filt(&a, hi));
        a = filt(&a, lo);
    }
    bands.approx = a;
    bands
}

fn round_shift(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let q = v.div_euclid(1 << shift);
    let r = v.rem_euclid(1 << shift);
    let half = 1i64 << (shift - 1);
    match r.cmp(&half) {
        core::cmp::Ordering::Greater => q + 1,
        core::cmp::Ordering::Less => q,
        core::cmp::Ordering::Equal => q + (q & 1),
    }
}

/// Integer filter bank: every level's sums are rounded half-to-even after
/// a right shift of `shift` bits.
pub fn dwt_int(x: &[i64], lo: &[i64], hi: &[i64], levels: usize, shift: u32) -> DwtBands<i64> {
    let filt = |x: &[i64], f: &[i64]| -> Vec<i64> {
        (0..x.len() / 2)
            .map(|i| {
                let s: i64 = f
                    .iter()
                    .enumerate()
                    .filter_map(|(k, c)| x.get(2 * i + k).map(|v| c * v))
                    .sum();
                round_shift(s, shift)
            })
            .collect()
    };
    let mut bands = DwtBands::default();
    let mut a = x.to_vec();
    for _ in 0..levels {
        bands.details.push(filt(&a, hi));
        a = filt(&a, lo);
    }
    bands.approx = a;
    bands
}

/// Shape of a valid-padding convolution in HWC layout with weights
/// `[M][K][K][C]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub m: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.h - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w - self.k) / self.stride + 1
    }
}

/// Exact convolution accumulators, output HWC `[Ho][Wo][M]`.
pub fn conv(shape: &ConvShape, input: &[i64], weights: &[i64]) -> Vec<i64> {
    let s = shape;
    let mut out = Vec::with_capacity(s.out_h() * s.out_w() * s.m);
    for oy in 0..s.out_h() {
        for ox in 0..s.out_w() {
            for m in 0..s.m {
                let mut acc = 0i64;
                for ky in 0..s.k {
                    for kx in 0..s.k {
                        for c in 0..s.c {
                            let iy = oy * s.stride + ky;
                            let ix = ox * s.stride + kx;
                            acc += input[(iy * s.w + ix) * s.c + c] * weights[((m * s.k + ky) * s.k + kx) * s.c + c];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Requantize accumulators: round-half-even right shift, optional ReLU.
pub fn requantize(acc: &[i64], shift: u32, relu: bool) -> Vec<i64> {
    acc.iter()
        .map(|&a| {
            let v = round_shift(a, shift);
            if relu {
                v.max(0)
            } else {
                v
            }
        })
        .collect()
}

fn round_even_f64(x: f64) -> i64 {
    let f = libm::floor(x);
    let d = x - f;
    let f = f as i64;
    if d > 0.5 || (d == 0.5 && f & 1 == 1) {
        f + 1
    } else {
        f
    }
}

/// Twiddle `e^{-2 pi i k / n}` with `frac` fractional bits.
pub fn twiddle(k: usize, n: usize, frac: u32) -> (i64, i64) {
    let ang = 2.0 * PI * k as f64 / n as f64;
    let s = (1i64 << frac) as f64;
    (round_even_f64(libm::cos(ang) * s), round_even_f64(-libm::sin(ang) * s))
}

fn bit_reverse(i: usize, log2n: u32) -> usize {
    if log2n == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - log2n)
    }
}

/// Golden radix-2 DIT fixed-point FFT with per-stage halving.
///
/// Twiddles carry `bits - 2` fractional bits. Each butterfly output
/// component is `round_half_even((p << f) + w*q) >> (f + 1))`, so the
/// result approximates `DFT(x) / n`.
pub fn fft_fixed(x: &[(i64, i64)], bits: u32) -> Vec<(i64, i64)> {
    let n = x.len();
    assert!(n.is_power_of_two(), "length must be a power of two");
    let log2n = n.trailing_zeros();
    let f = bits - 2;
    let mut a: Vec<(i64, i64)> = (0..n).map(|i| x[bit_reverse(i, log2n)]).collect();
    let mut half = 1;
    while half < n {
        let span = 2 * half;
        for start in (0..n).step_by(span) {
            for j in 0..half {
                let (wr, wi) = twiddle(j * (n / span), n, f);
                let (pr, pi) = a[start + j];
                let (qr, qi) = a[start + j + half];
                let tr = wr * qr - wi * qi;
                let ti = wi * qr + wr * qi;
                a[start + j] = (round_shift((pr << f) + tr, f + 1), round_shift((pi << f) + ti, f + 1));
                a[start + j + half] = (round_shift((pr << f) - tr, f + 1), round_shift((pi << f) - ti, f + 1));
            }
        }
        half = span;
    }
    a
}
