//! Variable-bitwidth computing array.
//!
//! Every product is formed from 4-bit multiplier partials. An operand of
//! width `b` is split into `b/4` nibbles; only the most significant nibble is
//! interpreted as signed. Wider products are built recursively: a 16-bit
//! operand is split into two 8-bit halves, each of those into two nibbles,
//! and the partials are shifted into place before accumulation. For 8x8 the
//! shifts are 0, 4, 4 and 8; for 16x16 the largest shift is 24.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Number of processing elements in the array.
pub const NUM_PES: usize = 8;
/// 4-bit multipliers per processing element.
pub const MULTIPLIERS_PER_PE: usize = 16;

/// Operand element width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "u32", into = "u32"))]
pub enum Width {
    W4,
    W8,
    W16,
}

impl Width {
    pub const ALL: [Width; 3] = [Width::W4, Width::W8, Width::W16];

    pub const fn bits(self) -> u32 {
        match self {
            Width::W4 => 4,
            Width::W8 => 8,
            Width::W16 => 16,
        }
    }

    pub const fn nibbles(self) -> u32 {
        self.bits() / 4
    }

    pub fn from_bits(bits: u32) -> Option<Width> {
        match bits {
            4 => Some(Width::W4),
            8 => Some(Width::W8),
            16 => Some(Width::W16),
            _ => None,
        }
    }

    /// Two-bit instruction code: 0 -> 4, 1 -> 8, 2 -> 16.
    pub const fn code(self) -> u32 {
        match self {
            Width::W4 => 0,
            Width::W8 => 1,
            Width::W16 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Width> {
        match code {
            0 => Some(Width::W4),
            1 => Some(Width::W8),
            2 => Some(Width::W16),
            _ => None,
        }
    }

    pub const fn min_value(self) -> i64 {
        -(1i64 << (self.bits() - 1))
    }

    pub const fn max_value(self) -> i64 {
        (1i64 << (self.bits() - 1)) - 1
    }

    pub fn contains(self, v: i64) -> bool {
        (self.min_value()..=self.max_value()).contains(&v)
    }
}

impl TryFrom<u32> for Width {
    type Error = WidthError;

    fn try_from(bits: u32) -> Result<Self, Self::Error> {
        Width::from_bits(bits).ok_or(WidthError(bits))
    }
}

impl From<Width> for u32 {
    fn from(w: Width) -> u32 {
        w.bits()
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("unsupported element width {0} (expected 4, 8 or 16)")]
pub struct WidthError(pub u32);

/// Activation and weight widths in effect for the computing array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BitwidthConfig {
    pub a_bits: Width,
    pub w_bits: Width,
}

impl BitwidthConfig {
    pub const fn new(a_bits: Width, w_bits: Width) -> Self {
        BitwidthConfig { a_bits, w_bits }
    }

    pub const fn square(w: Width) -> Self {
        BitwidthConfig { a_bits: w, w_bits: w }
    }

    /// Independent products a PE can form per step.
    pub const fn lanes_per_pe(self) -> usize {
        MULTIPLIERS_PER_PE / (self.a_bits.nibbles() * self.w_bits.nibbles()) as usize
    }

    /// Products the whole array forms per step.
    pub const fn products_per_step(self) -> usize {
        self.lanes_per_pe() * NUM_PES
    }

    pub fn all() -> impl Iterator<Item = BitwidthConfig> {
        Width::ALL
            .into_iter()
            .flat_map(|a| Width::ALL.into_iter().map(move |w| BitwidthConfig::new(a, w)))
    }
}

impl Default for BitwidthConfig {
    fn default() -> Self {
        BitwidthConfig::square(Width::W8)
    }
}

impl fmt::Display for BitwidthConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.a_bits, self.w_bits)
    }
}

impl core::str::FromStr for BitwidthConfig {
    type Err = WidthError;

    /// Parses `"AxW"`, e.g. `"16x8"`, or a single width for a square config.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |t: &str| -> Result<Width, WidthError> {
            let bits = t.trim().parse::<u32>().map_err(|_| WidthError(0))?;
            Width::try_from(bits)
        };
        match s.split_once(['x', 'X']) {
            Some((a, w)) => Ok(BitwidthConfig::new(parse(a)?, parse(w)?)),
            None => parse(s).map(BitwidthConfig::square),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MacError {
    #[error("operand {value} does not fit a signed {bits}-bit element")]
    OperandOutOfRange { value: i64, bits: u32 },
    #[error("expected {expected} lanes, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("accumulator overflow")]
    AccumulatorOverflow,
}

/// Multiply two raw nibbles. A nibble flagged signed is read as two's
/// complement (-8..=7), otherwise as 0..=15.
pub fn mul4(a: u8, b: u8, a_signed: bool, b_signed: bool) -> i16 {
    fn value(n: u8, signed: bool) -> i16 {
        let n = (n & 0xF) as i16;
        if signed && n >= 8 {
            n - 16
        } else {
            n
        }
    }
    value(a, a_signed) * value(b, b_signed)
}

/// One 4-bit multiplier invocation inside a fused product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partial {
    pub a_nibble: u8,
    pub w_nibble: u8,
    pub a_signed: bool,
    pub w_signed: bool,
    pub shift: u32,
}

impl Partial {
    pub fn value(&self) -> i64 {
        (mul4(self.a_nibble, self.w_nibble, self.a_signed, self.w_signed) as i64) << self.shift
    }
}

#[derive(Clone, Copy)]
struct Operand {
    raw: u32,
    bits: u32,
    signed: bool,
}

impl Operand {
    fn split(self) -> (Operand, Operand) {
        let half = self.bits / 2;
        let lo = Operand {
            raw: self.raw & ((1 << half) - 1),
            bits: half,
            signed: false,
        };
        let hi = Operand {
            raw: self.raw >> half,
            bits: half,
            signed: self.signed,
        };
        (hi, lo)
    }
}

fn decompose(a: Operand, w: Operand, shift: u32, emit: &mut dyn FnMut(Partial)) {
    if a.bits == 4 && w.bits == 4 {
        emit(Partial {
            a_nibble: a.raw as u8,
            w_nibble: w.raw as u8,
            a_signed: a.signed,
            w_signed: w.signed,
            shift,
        });
    } else if a.bits >= w.bits {
        let (hi, lo) = a.split();
        decompose(lo, w, shift, emit);
        decompose(hi, w, shift + lo.bits, emit);
    } else {
        let (hi, lo) = w.split();
        decompose(a, lo, shift, emit);
        decompose(a, hi, shift + lo.bits, emit);
    }
}

fn operand(value: i64, width: Width) -> Result<Operand, MacError> {
    if !width.contains(value) {
        return Err(MacError::OperandOutOfRange {
            value,
            bits: width.bits(),
        });
    }
    let bits = width.bits();
    Ok(Operand {
        raw: (value as u32) & ((1u32 << bits) - 1),
        bits,
        signed: true,
    })
}

/// The 4-bit partial products (and their shifts) that make up `a * w`.
pub fn partials(a: i64, w: i64, cfg: BitwidthConfig) -> Result<Vec<Partial>, MacError> {
    let a = operand(a, cfg.a_bits)?;
    let w = operand(w, cfg.w_bits)?;
    let mut out = Vec::with_capacity(16);
    decompose(a, w, 0, &mut |p| out.push(p));
    Ok(out)
}

/// Product of two in-range operands, formed only by shift-adding `mul4`
/// partials.
pub fn compose_mul(a: i64, w: i64, cfg: BitwidthConfig) -> Result<i64, MacError> {
    let a = operand(a, cfg.a_bits)?;
    let w = operand(w, cfg.w_bits)?;
    let mut acc = 0i64;
    decompose(a, w, 0, &mut |p| acc += p.value());
    Ok(acc)
}

/// A processing element: sixteen 4-bit multipliers and one accumulator per
/// lane.
#[derive(Debug, Clone, Default)]
pub struct PeState {
    lanes: [i32; MULTIPLIERS_PER_PE],
}

impl PeState {
    pub fn lane_accumulators(&self) -> &[i32] {
        &self.lanes
    }

    pub fn clear(&mut self) {
        self.lanes = [0; MULTIPLIERS_PER_PE];
    }

    /// Multiply-accumulate one lane vector and return the lane sum.
    pub fn dot(&mut self, activations: &[i64], weights: &[i64], cfg: BitwidthConfig) -> Result<i32, MacError> {
        let lanes = cfg.lanes_per_pe();
        for len in [activations.len(), weights.len()] {
            if len != lanes {
                return Err(MacError::LengthMismatch {
                    expected: lanes,
                    got: len,
                });
            }
        }
        for (lane, (&a, &w)) in activations.iter().zip(weights).enumerate() {
            let p = compose_mul(a, w, cfg)?;
            let p = i32::try_from(p).map_err(|_| MacError::AccumulatorOverflow)?;
            self.lanes[lane] = self.lanes[lane].checked_add(p).ok_or(MacError::AccumulatorOverflow)?;
        }
        self.lanes[..lanes]
            .iter()
            .try_fold(0i32, |s, &v| s.checked_add(v))
            .ok_or(MacError::AccumulatorOverflow)
    }
}

/// Sum of lane products for a single PE.
pub fn pe_dot(activations: &[i64], weights: &[i64], cfg: BitwidthConfig) -> Result<i32, MacError> {
    PeState::default().dot(activations, weights, cfg)
}

/// The eight PEs plus the activation broadcast register.
#[derive(Debug, Clone, Default)]
pub struct ArrayState {
    pes: [PeState; NUM_PES],
    broadcast: Vec<i64>,
}

impl ArrayState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pes(&self) -> &[PeState] {
        &self.pes
    }

    pub fn broadcast(&self) -> &[i64] {
        &self.broadcast
    }

    /// One array cycle: every PE sees the same activations and its own
    /// weight vector. Lane accumulators start from zero each step.
    pub fn step(
        &mut self,
        activations: &[i64],
        weight_sets: &[&[i64]; NUM_PES],
        cfg: BitwidthConfig,
    ) -> Result<[i32; NUM_PES], MacError> {
        self.broadcast.clear();
        self.broadcast.extend_from_slice(activations);
        let mut out = [0i32; NUM_PES];
        for (k, pe) in self.pes.iter_mut().enumerate() {
            pe.clear();
            out[k] = pe.dot(&self.broadcast, weight_sets[k], cfg)?;
        }
        Ok(out)
    }
}

/// Stateless form of [`ArrayState::step`].
pub fn array_step(
    activations: &[i64],
    weight_sets: &[&[i64]; NUM_PES],
    cfg: BitwidthConfig,
) -> Result<[i32; NUM_PES], MacError> {
    ArrayState::new().step(activations, weight_sets, cfg)
}
