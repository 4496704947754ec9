//! Lowering of signal-processing kernels and convolution layers onto the
//! machine.
//!
//! Every mapping produces a [`Program`] plus a [`TensorPlan`]. The plan
//! lists the off-chip tensors the program expects (inputs, constants,
//! outputs, inter-stage scratch), the on-chip regions it uses and the
//! requantization shifts it applied. Off-chip tensors are packed
//! little-endian at their element width, starting `elem_offset` elements
//! into their image.

mod build;
mod conv;
mod count;
mod dct;
mod dwt;
mod fft;
mod fir;
mod pipeline;
mod quantize;
pub mod shuffle;

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::isa::Program;
use crate::mac_array::{BitwidthConfig, Width};
use crate::memory::BufferLayout;

pub use conv::{ConvLayer, Padding};
pub use count::{count_mult_adds, Layer, Network};
pub use dct::{dct_coefficients, DCT_N};
pub use dwt::{deinterleave, level_name as dwt_level_name};
pub use fft::{fft_output_from_elements, fft_twiddles, FftSchedule};
pub use quantize::{dequantize, quantize, Quantized};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    Input,
    Constant,
    Output,
    /// Off-chip staging between pipeline stages.
    Scratch,
}

/// A tensor image in off-chip memory.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DramTensor {
    pub name: String,
    pub role: Role,
    pub dram_addr: u32,
    pub bits: u32,
    /// Element count, excluding the leading `elem_offset` zero elements.
    pub len: usize,
    pub elem_offset: usize,
    /// Real value = stored integer * 2^-frac_bits.
    pub frac_bits: i32,
    /// Contents of `Constant` tensors.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Vec::is_empty"))]
    pub data: Vec<i64>,
}

impl DramTensor {
    /// Image size in bytes, rounded up to whole words.
    pub fn byte_len(&self) -> usize {
        packed_bytes(self.bits, self.elem_offset + self.len)
    }
}

/// A word-aligned on-chip allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Region {
    pub name: String,
    pub word_start: usize,
    pub words: usize,
}

impl Region {
    /// Index of the region's first element at width `bits`.
    pub fn elem_base(&self, bits: u32) -> usize {
        self.word_start * 64 / bits as usize
    }

    pub fn elem_capacity(&self, bits: u32) -> usize {
        self.words * 64 / bits as usize
    }

    pub fn contains_elems(&self, bits: u32, first: u64, last: u64) -> bool {
        let lo = self.elem_base(bits) as u64;
        let hi = lo + self.elem_capacity(bits) as u64;
        first >= lo && last < hi
    }
}

/// Buffer layout, constants and requantization record for a program.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorPlan {
    pub tensors: Vec<DramTensor>,
    pub regions: Vec<Region>,
    /// `(stage, shift)` for every requantizing compute pass.
    pub shifts: Vec<(String, u32)>,
}

impl TensorPlan {
    pub fn tensor(&self, name: &str) -> Option<&DramTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut DramTensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    /// Off-chip bytes needed to hold every tensor.
    pub fn offchip_bytes(&self) -> usize {
        self.tensors
            .iter()
            .map(|t| t.dram_addr as usize + t.byte_len())
            .max()
            .unwrap_or(0)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &DramTensor> {
        self.tensors.iter().filter(|t| t.role == Role::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &DramTensor> {
        self.tensors.iter().filter(|t| t.role == Role::Output)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("on-chip buffer exhausted: need {need} words, {free} free")]
    Capacity { need: usize, free: usize },
    #[error("stage {stage} expects {expected}, previous stage produces {got}")]
    ShapeMismatch {
        stage: usize,
        expected: String,
        got: String,
    },
}

pub(crate) fn invalid(msg: impl Into<String>) -> MapError {
    MapError::Invalid(msg.into())
}

/// A computation to be mapped, with its operand widths.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Workload {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: WorkloadKind,
    #[cfg_attr(feature = "serde", serde(default))]
    pub bitwidth: BitwidthConfig,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum WorkloadKind {
    /// Radix-2 complex FFT scaled by `1/n`. `twiddles` overrides the
    /// generated table (`n/2` entries of `(wr, wi)`).
    Fft {
        n: usize,
        #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
        twiddles: Option<Vec<(i64, i64)>>,
    },
    /// `y[n] = sum_k h[k] x[n-k]`, zero history.
    Fir {
        taps: Vec<i64>,
        length: usize,
        #[cfg_attr(feature = "serde", serde(default))]
        shift: u32,
        #[cfg_attr(feature = "serde", serde(default = "default_out_bits"))]
        out_bits: u32,
    },
    /// Orthonormal 8x8 2-D DCT-II over `blocks` row-major blocks.
    /// `input_bits` is the signal's dynamic range (defaults to the
    /// activation width).
    Dct2d {
        blocks: usize,
        #[cfg_attr(feature = "serde", serde(default))]
        input_bits: Option<u32>,
    },
    /// Multi-level analysis filter bank with integer taps; each level's
    /// sums are shifted right by `shift`.
    Dwt {
        length: usize,
        levels: usize,
        lo: Vec<i64>,
        hi: Vec<i64>,
        shift: u32,
    },
    ConvLayer(ConvLayer),
    /// Stages run back to back. `staged` routes every hand-off through
    /// off-chip scratch memory instead of keeping it on chip.
    Pipeline {
        stages: Vec<Workload>,
        #[cfg_attr(feature = "serde", serde(default))]
        staged: bool,
    },
    /// Count-only network description.
    Network(Network),
}

#[cfg(feature = "serde")]
fn default_out_bits() -> u32 {
    32
}

impl Workload {
    pub fn new(kind: WorkloadKind, bitwidth: BitwidthConfig) -> Self {
        Workload { kind, bitwidth }
    }

    pub fn fft(n: usize, bitwidth: BitwidthConfig) -> Self {
        Self::new(WorkloadKind::Fft { n, twiddles: None }, bitwidth)
    }

    pub fn fir(taps: Vec<i64>, length: usize, bitwidth: BitwidthConfig) -> Self {
        Self::new(
            WorkloadKind::Fir {
                taps,
                length,
                shift: 0,
                out_bits: 32,
            },
            bitwidth,
        )
    }

    pub fn dct(blocks: usize, bitwidth: BitwidthConfig) -> Self {
        Self::new(
            WorkloadKind::Dct2d {
                blocks,
                input_bits: None,
            },
            bitwidth,
        )
    }

    pub fn conv(layer: ConvLayer, bitwidth: BitwidthConfig) -> Self {
        Self::new(WorkloadKind::ConvLayer(layer), bitwidth)
    }

    /// Same workload at another bitwidth; pipeline stages follow along.
    pub fn with_bitwidth(&self, bitwidth: BitwidthConfig) -> Self {
        let kind = match &self.kind {
            WorkloadKind::Pipeline { stages, staged } => WorkloadKind::Pipeline {
                stages: stages.iter().map(|s| s.with_bitwidth(bitwidth)).collect(),
                staged: *staged,
            },
            k => k.clone(),
        };
        Workload { kind, bitwidth }
    }

    /// Map onto the default buffer layout.
    pub fn map(&self) -> Result<(Program, TensorPlan), MapError> {
        self.map_with(&BufferLayout::default())
    }

    pub fn map_with(&self, layout: &BufferLayout) -> Result<(Program, TensorPlan), MapError> {
        let mut b = build::Builder::new(*layout);
        match &self.kind {
            WorkloadKind::Pipeline { stages, staged } => pipeline::map(&mut b, stages, *staged)?,
            WorkloadKind::ConvLayer(layer) => conv::map_layer(&mut b, layer, self.bitwidth)?,
            WorkloadKind::Network(_) => return Err(invalid("network descriptions are count-only")),
            _ => {
                let input = b.load_input(self)?;
                let out = b.emit_stage(self, input, "")?;
                b.store_output(&out, "y")?;
            }
        }
        Ok(b.finish())
    }

    /// Element count and width this workload consumes (for chaining).
    pub(crate) fn input_shape(&self) -> Result<(usize, Width), MapError> {
        let a = self.bitwidth.a_bits;
        Ok(match &self.kind {
            WorkloadKind::Fft { n, .. } => (2 * n, a),
            WorkloadKind::Fir { length, .. } => (*length, a),
            WorkloadKind::Dct2d { blocks, .. } => (64 * blocks, a),
            WorkloadKind::Dwt { length, .. } => (*length, a),
            WorkloadKind::ConvLayer(l) => (l.h * l.w * l.c, a),
            WorkloadKind::Pipeline { .. } | WorkloadKind::Network(_) => {
                return Err(invalid("nested pipelines are not supported"))
            }
        })
    }
}

/// Bytes needed for `count` elements of `bits`, rounded to whole words.
pub fn packed_bytes(bits: u32, count: usize) -> usize {
    (count * bits as usize).div_ceil(64) * 8
}

/// Pack `values` at `bits` per element after `elem_offset` zero elements.
pub fn pack_elements(bits: u32, elem_offset: usize, values: &[i64]) -> Vec<u8> {
    let mut words = alloc::vec![0u64; packed_bytes(bits, elem_offset + values.len()) / 8];
    let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    for (i, &v) in values.iter().enumerate() {
        let bit = (elem_offset + i) * bits as usize;
        words[bit / 64] |= ((v as u64) & mask) << (bit % 64);
    }
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

/// Inverse of [`pack_elements`], sign-extending each element.
pub fn unpack_elements(bytes: &[u8], bits: u32, elem_offset: usize, len: usize) -> Vec<i64> {
    let shift = 64 - bits;
    (0..len)
        .map(|i| {
            let bit = (elem_offset + i) * bits as usize;
            let w = u64::from_le_bytes(bytes[bit / 64 * 8..bit / 64 * 8 + 8].try_into().expect("8 bytes"));
            (((w >> (bit % 64)) << shift) as i64) >> shift
        })
        .collect()
}
