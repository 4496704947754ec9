//! Programmable shuffling fabric: buffer controller interface (BCIF), data
//! shuffling unit (DSU) and data padding unit (DPU).
//!
//! The DSU has sixteen identical units. Unit `i` picks one of sixteen staged
//! 64-bit words (`sel_code`), splits it into nibbles, picks one nibble
//! (`split_code`) and drives nibble `i` of the output word. The DPU then
//! overwrites selected element slots of the output word with constants.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::mac_array::Width;
use crate::memory::{BufferLayout, MemError, OnChipBuffer};

/// Words visible to the DSU in one step.
pub const WINDOW: usize = 16;
/// Staging capacity of the BCIF data buffer, split into two halves.
pub const STAGING_WORDS: usize = 64;
pub const REGION_WORDS: usize = STAGING_WORDS / 2;

/// A 64-bit datapath word viewed as sixteen nibbles, nibble 0 least
/// significant.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Word64(pub u64);

impl Word64 {
    pub const fn nibble(self, i: usize) -> u8 {
        ((self.0 >> (4 * i)) & 0xF) as u8
    }

    pub const fn with_nibble(self, i: usize, v: u8) -> Word64 {
        let shift = 4 * i;
        Word64((self.0 & !(0xF << shift)) | (((v & 0xF) as u64) << shift))
    }

    pub fn nibbles(self) -> [u8; 16] {
        core::array::from_fn(|i| self.nibble(i))
    }

    pub fn from_nibbles(n: [u8; 16]) -> Word64 {
        n.iter().enumerate().fold(Word64(0), |w, (i, &v)| w.with_nibble(i, v))
    }
}

impl fmt::Debug for Word64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word64({:#018x})", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FabricError {
    #[error("shuffle unit {0} is not configured")]
    Unconfigured(usize),
    #[error("shuffle configuration not finished (no finish flag since last change)")]
    NotFinished,
    #[error("{field} = {value} out of range")]
    OutOfRange { field: &'static str, value: u32 },
    #[error("padding value {value:#x} wider than {bits}-bit element")]
    PadValueTooWide { value: u32, bits: u32 },
    #[error("padding position {position} invalid for {bits}-bit elements")]
    PadPosition { position: u32, bits: u32 },
    #[error("staging overflow: {have} + {add} words exceeds {cap}")]
    StagingOverflow { have: usize, add: usize, cap: usize },
    #[error("output slot {0} outside BCIF output buffer")]
    OutputSlot(usize),
    #[error(transparent)]
    Memory(#[from] MemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShuffleUnitConfig {
    pub sel_code: u8,
    pub split_code: u8,
}

impl ShuffleUnitConfig {
    pub fn new(sel_code: u8, split_code: u8) -> Result<Self, FabricError> {
        if sel_code > 15 {
            return Err(FabricError::OutOfRange {
                field: "sel",
                value: sel_code as u32,
            });
        }
        if split_code > 15 {
            return Err(FabricError::OutOfRange {
                field: "split",
                value: split_code as u32,
            });
        }
        Ok(ShuffleUnitConfig { sel_code, split_code })
    }
}

/// Per-unit configuration of the DSU. Unit `i` always drives output nibble
/// `i`; configurations persist until overwritten.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShuffleArrayConfig {
    units: [Option<ShuffleUnitConfig>; 16],
    finished: bool,
}

impl ShuffleArrayConfig {
    /// A fully configured, finished array.
    pub fn from_units(units: [ShuffleUnitConfig; 16]) -> Self {
        ShuffleArrayConfig {
            units: units.map(Some),
            finished: true,
        }
    }

    /// Output nibble `i` = nibble `f(i).1` of input word `f(i).0`.
    pub fn from_fn(f: impl Fn(usize) -> (u8, u8)) -> Result<Self, FabricError> {
        let mut units = [ShuffleUnitConfig {
            sel_code: 0,
            split_code: 0,
        }; 16];
        for (i, u) in units.iter_mut().enumerate() {
            let (sel, split) = f(i);
            *u = ShuffleUnitConfig::new(sel, split)?;
        }
        Ok(Self::from_units(units))
    }

    /// Apply one `ctrl-shuffling` instruction.
    pub fn configure(&mut self, unit: u8, cfg: ShuffleUnitConfig, finish: bool) -> Result<(), FabricError> {
        if unit > 15 {
            return Err(FabricError::OutOfRange {
                field: "unit",
                value: unit as u32,
            });
        }
        self.units[unit as usize] = Some(cfg);
        self.finished = finish;
        Ok(())
    }

    pub fn unit(&self, i: usize) -> Option<ShuffleUnitConfig> {
        self.units.get(i).copied().flatten()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// The configuration a step would use, or why it cannot run.
    pub fn resolved(&self) -> Result<[ShuffleUnitConfig; 16], FabricError> {
        let mut out = [ShuffleUnitConfig {
            sel_code: 0,
            split_code: 0,
        }; 16];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.units[i].ok_or(FabricError::Unconfigured(i))?;
        }
        if !self.finished {
            return Err(FabricError::NotFinished);
        }
        Ok(out)
    }
}

/// One shuffling unit: nibble `split_code` of word `sel_code`.
pub fn shuffle_unit(inputs: &[Word64; WINDOW], cfg: ShuffleUnitConfig) -> u8 {
    let word = inputs[cfg.sel_code as usize & 0xF];
    let registers = word.nibbles();
    registers[cfg.split_code as usize & 0xF]
}

/// All sixteen units in parallel, concatenated into a new word.
pub fn shuffle_step(inputs: &[Word64; WINDOW], cfg: &ShuffleArrayConfig) -> Result<Word64, FabricError> {
    let units = cfg.resolved()?;
    Ok(Word64::from_nibbles(core::array::from_fn(|i| {
        shuffle_unit(inputs, units[i])
    })))
}

/// Padding directives for one output word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddingConfig {
    element_width: Width,
    slots: [Option<u16>; 16],
}

impl PaddingConfig {
    pub fn new(element_width: Width) -> Self {
        PaddingConfig {
            element_width,
            slots: [None; 16],
        }
    }

    pub fn element_width(&self) -> Width {
        self.element_width
    }

    /// Valid padding positions per word: 16, 8 or 4.
    pub fn slot_count(&self) -> usize {
        64 / self.element_width.bits() as usize
    }

    pub fn set(&mut self, position: u32, value: u32) -> Result<(), FabricError> {
        let bits = self.element_width.bits();
        if position as usize >= self.slot_count() {
            return Err(FabricError::PadPosition { position, bits });
        }
        if value >> bits != 0 {
            return Err(FabricError::PadValueTooWide { value, bits });
        }
        self.slots[position as usize] = Some(value as u16);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }

    pub fn clear(&mut self) {
        self.slots = [None; 16];
    }

    pub fn masked(&self) -> impl Iterator<Item = (usize, u16)> + '_ {
        self.slots.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v)))
    }
}

/// Overwrite the masked element slots of `word`.
pub fn pad(word: Word64, cfg: &PaddingConfig) -> Word64 {
    let bits = cfg.element_width.bits();
    let m = (1u64 << bits) - 1;
    cfg.masked().fold(word, |w, (slot, v)| {
        let shift = slot as u32 * bits;
        Word64((w.0 & !(m << shift)) | ((v as u64 & m) << shift))
    })
}

/// Read or write descriptor held by the BCIF register file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BufDescriptor {
    pub bank_start: u32,
    pub bank_offset: u32,
    pub length: u32,
}

/// BCIF register file and data buffer.
///
/// `rd-buf` appends words to the staging buffer; the DSU windows read from
/// it. Shuffled words land in the output buffer, which `wr-buf` drains to
/// memory. Staging slots `0..32` are region A, `32..64` region B.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BcifRegisterFile {
    pub read: BufDescriptor,
    pub write: BufDescriptor,
    staging: Vec<Word64>,
    output: [Word64; STAGING_WORDS],
}

impl Default for BcifRegisterFile {
    fn default() -> Self {
        BcifRegisterFile {
            read: BufDescriptor::default(),
            write: BufDescriptor::default(),
            staging: Vec::with_capacity(STAGING_WORDS),
            output: [Word64(0); STAGING_WORDS],
        }
    }
}

impl BcifRegisterFile {
    pub fn staged(&self) -> &[Word64] {
        &self.staging
    }

    pub fn region_a(&self) -> &[Word64] {
        &self.staging[..self.staging.len().min(REGION_WORDS)]
    }

    pub fn region_b(&self) -> &[Word64] {
        &self.staging[self.staging.len().min(REGION_WORDS)..]
    }

    pub fn clear_staging(&mut self) {
        self.staging.clear();
    }

    /// Sixteen staged words starting at `start`; slots past the fill level
    /// read as zero.
    pub fn window(&self, start: usize) -> [Word64; WINDOW] {
        core::array::from_fn(|i| self.staging.get(start + i).copied().unwrap_or_default())
    }

    pub fn output(&self) -> &[Word64] {
        &self.output
    }

    pub fn set_output(&mut self, slot: usize, w: Word64) -> Result<(), FabricError> {
        *self.output.get_mut(slot).ok_or(FabricError::OutputSlot(slot))? = w;
        Ok(())
    }
}

/// Stage `rf.read.length` words from the read descriptor's location.
pub fn bcif_read(buffer: &OnChipBuffer, rf: &mut BcifRegisterFile) -> Result<usize, FabricError> {
    let d = rf.read;
    let len = d.length as usize;
    if len == 0 {
        return Ok(0);
    }
    if rf.staging.len() + len > STAGING_WORDS {
        return Err(FabricError::StagingOverflow {
            have: rf.staging.len(),
            add: len,
            cap: STAGING_WORDS,
        });
    }
    let start = buffer.layout().linear(d.bank_start, d.bank_offset)?;
    let words = buffer.words(start, len)?;
    rf.staging.extend(words.iter().map(|&w| Word64(w)));
    Ok(len)
}

/// Write output slots `0..rf.write.length` to the write descriptor's
/// location.
pub fn bcif_write(buffer: &mut OnChipBuffer, rf: &BcifRegisterFile) -> Result<usize, FabricError> {
    let d = rf.write;
    let len = d.length as usize;
    if len == 0 {
        return Ok(0);
    }
    if len > STAGING_WORDS {
        return Err(FabricError::OutputSlot(len - 1));
    }
    let layout: BufferLayout = *buffer.layout();
    let start = layout.linear(d.bank_start, d.bank_offset)?;
    let dst = buffer.words_mut(start, len)?;
    for (d, w) in dst.iter_mut().zip(&rf.output[..len]) {
        *d = w.0;
    }
    Ok(len)
}
