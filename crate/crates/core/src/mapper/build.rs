//! Program/plan builder shared by the individual mappings.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{invalid, DramTensor, MapError, Region, Role, TensorPlan, Workload, WorkloadKind};
use crate::isa::{Instruction, Program, TileTransfer};
use crate::mac_array::{BitwidthConfig, Width};
use crate::memory::BufferLayout;

/// An on-chip tensor: `len` elements of `width` starting `offset`
/// elements into `region`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct OnChip {
    pub region: Region,
    pub offset: usize,
    pub len: usize,
    pub width: u32,
    pub frac_bits: i32,
}

impl OnChip {
    pub fn elem_base(&self) -> usize {
        self.region.elem_base(self.width) + self.offset
    }
}

pub(crate) struct Builder {
    pub program: Program,
    pub plan: TensorPlan,
    pub layout: BufferLayout,
    pub shuffle: super::shuffle::ShuffleState,
    next_word: usize,
    next_dram: usize,
    bitwidth: Option<BitwidthConfig>,
}

impl Builder {
    pub fn new(layout: BufferLayout) -> Self {
        Builder {
            program: Program::new(),
            plan: TensorPlan::default(),
            layout,
            shuffle: Default::default(),
            next_word: 0,
            next_dram: 0,
            bitwidth: None,
        }
    }

    pub fn push(&mut self, i: Instruction) {
        self.program.push(i);
    }

    pub fn free_words(&self) -> usize {
        self.layout.total_words() - self.next_word
    }

    /// Reserve `words` on-chip words.
    pub fn alloc(&mut self, name: impl Into<String>, words: usize) -> Result<Region, MapError> {
        if words > self.free_words() {
            return Err(MapError::Capacity {
                need: words,
                free: self.free_words(),
            });
        }
        let r = Region {
            name: name.into(),
            word_start: self.next_word,
            words,
        };
        self.next_word += words;
        self.plan.regions.push(r.clone());
        Ok(r)
    }

    /// Reserve room for `count` elements of `bits`.
    pub fn alloc_elems(&mut self, name: impl Into<String>, bits: u32, count: usize) -> Result<Region, MapError> {
        self.alloc(name, (count * bits as usize).div_ceil(64).max(1))
    }

    pub fn tensor(
        &mut self,
        name: impl Into<String>,
        role: Role,
        bits: u32,
        len: usize,
        elem_offset: usize,
        data: Vec<i64>,
    ) -> DramTensor {
        let t = DramTensor {
            name: name.into(),
            role,
            dram_addr: self.next_dram as u32,
            bits,
            len,
            elem_offset,
            frac_bits: 0,
            data,
        };
        self.next_dram += t.byte_len();
        self.plan.tensors.push(t.clone());
        t
    }

    pub fn set_frac_bits(&mut self, name: &str, frac_bits: i32) {
        if let Some(t) = self.plan.tensor_mut(name) {
            t.frac_bits = frac_bits;
        }
    }

    fn transfer(&self, dram_addr: usize, word_start: usize, bytes: usize) -> TileTransfer {
        let (bank_start, bank_offset) = self.layout.split(word_start);
        TileTransfer {
            dram_addr: dram_addr as u32,
            bank_start,
            bank_offset,
            length_bytes: bytes as u32,
        }
    }

    /// Copy a whole tensor image into on-chip memory at `word_start`.
    pub fn load(&mut self, t: &DramTensor, word_start: usize) {
        let x = self.transfer(t.dram_addr as usize, word_start, t.byte_len());
        self.push(Instruction::LoadTile(x));
    }

    /// Copy a word range of a tensor image.
    pub fn load_words(&mut self, t: &DramTensor, first_word: usize, words: usize, word_start: usize) {
        let x = self.transfer(t.dram_addr as usize + 8 * first_word, word_start, 8 * words);
        self.push(Instruction::LoadTile(x));
    }

    pub fn store_words(&mut self, t: &DramTensor, first_word: usize, words: usize, word_start: usize) {
        let x = self.transfer(t.dram_addr as usize + 8 * first_word, word_start, 8 * words);
        self.push(Instruction::StoreTile(x));
    }

    pub fn set_bitwidth(&mut self, cfg: BitwidthConfig) {
        if self.bitwidth != Some(cfg) {
            self.push(Instruction::CtrlBitwidth {
                a_bits: cfg.a_bits,
                w_bits: cfg.w_bits,
            });
            self.bitwidth = Some(cfg);
        }
    }

    pub fn bitwidth(&self) -> Option<BitwidthConfig> {
        self.bitwidth
    }

    pub fn record_shift(&mut self, stage: impl Into<String>, shift: u32) {
        self.plan.shifts.push((stage.into(), shift));
    }

    /// Declare the workload's input tensor and load it on chip.
    pub fn load_input(&mut self, w: &Workload) -> Result<OnChip, MapError> {
        let (len, width) = w.input_shape()?;
        let bits = width.bits();
        // Filters read past the end of their input; leave zero headroom.
        let tail = match &w.kind {
            WorkloadKind::Dwt { lo, hi, .. } => lo.len().max(hi.len()),
            _ => 0,
        };
        let head = match &w.kind {
            WorkloadKind::Fir { taps, .. } => taps.len().saturating_sub(1),
            _ => 0,
        };
        let t = self.tensor("x", Role::Input, bits, len, head, Vec::new());
        let region = self.alloc_elems("x", bits, head + len + tail)?;
        self.load(&t, region.word_start);
        Ok(OnChip {
            region,
            offset: head,
            len,
            width: bits,
            frac_bits: 0,
        })
    }

    /// Store an on-chip result as output tensor `name`.
    pub fn store_output(&mut self, out: &OnChip, name: &str) -> Result<(), MapError> {
        let first_bit = out.offset * out.width as usize;
        if !first_bit.is_multiple_of(64) {
            return Err(invalid(format!("output `{name}` is not word aligned")));
        }
        let mut t = self.tensor(name, Role::Output, out.width, out.len, 0, Vec::new());
        t.frac_bits = out.frac_bits;
        self.set_frac_bits(name, out.frac_bits);
        let words = t.byte_len() / 8;
        self.store_words(&t, 0, words, out.region.word_start + first_bit / 64);
        Ok(())
    }

    /// Emit one resident stage reading `input` and return its result.
    pub fn emit_stage(&mut self, w: &Workload, input: OnChip, prefix: &str) -> Result<OnChip, MapError> {
        self.set_bitwidth(w.bitwidth);
        match &w.kind {
            WorkloadKind::Fft { n, twiddles } => {
                super::fft::emit(self, *n, twiddles.as_deref(), w.bitwidth, input, prefix)
            }
            WorkloadKind::Fir {
                taps,
                length,
                shift,
                out_bits,
            } => super::fir::emit(self, taps, *length, *shift, *out_bits, w.bitwidth, input, prefix),
            WorkloadKind::Dct2d { blocks, input_bits } => super::dct::emit(
                self,
                *blocks,
                input_bits.unwrap_or(super::dct::default_input_bits(w.bitwidth)),
                w.bitwidth,
                input,
                prefix,
            ),
            WorkloadKind::Dwt {
                length,
                levels,
                lo,
                hi,
                shift,
            } => super::dwt::emit(self, *length, *levels, lo, hi, *shift, w.bitwidth, input, prefix),
            WorkloadKind::ConvLayer(l) => super::conv::emit_resident(self, l, w.bitwidth, input, prefix),
            WorkloadKind::Pipeline { .. } | WorkloadKind::Network(_) => Err(invalid("not a single stage")),
        }
    }

    /// Declare a constant, load it and return where it landed.
    pub fn constant(&mut self, name: impl Into<String>, width: Width, data: Vec<i64>) -> Result<OnChip, MapError> {
        let name = name.into();
        let bits = width.bits();
        let len = data.len();
        let t = self.tensor(name.clone(), Role::Constant, bits, len, 0, data);
        let region = self.alloc_elems(name, bits, len)?;
        self.load(&t, region.word_start);
        Ok(OnChip {
            region,
            offset: 0,
            len,
            width: bits,
            frac_bits: 0,
        })
    }

    pub fn finish(mut self) -> (Program, TensorPlan) {
        self.push(Instruction::Halt);
        (self.program, self.plan)
    }
}
