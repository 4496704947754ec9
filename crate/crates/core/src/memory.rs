//! On-chip data buffer, off-chip memory and the DMA engine.
//!
//! The on-chip buffer is a flat array of 64-bit words carved into equal
//! banks. With the default layout (18 banks of 8 KB) banks 0..16 form the
//! 128 KB main region and banks 16..18 the 16 KB signal-processing region.
//! Both memories are zero-initialised.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

pub use crate::fabric::Word64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("on-chip access at word {addr} (+{len}) outside buffer of {size} words")]
    OnChipOutOfBounds { addr: usize, len: usize, size: usize },
    #[error("bank {bank} offset {offset} outside layout ({banks} banks of {bank_words} words)")]
    BadBankAddress {
        bank: u32,
        offset: u32,
        banks: u32,
        bank_words: u32,
    },
    #[error("off-chip access at byte {addr} (+{len}) outside memory of {size} bytes")]
    OffChipOutOfBounds { addr: usize, len: usize, size: usize },
    #[error("address {0:#x} is not 8-byte aligned")]
    Unaligned(usize),
    #[error("DMA length {0} is not a multiple of 8 bytes")]
    RaggedLength(u32),
}

/// Bank layout of the on-chip buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BufferLayout {
    pub banks: u32,
    pub bank_words: u32,
    /// Trailing banks reserved for signal-processing data.
    pub signal_banks: u32,
}

impl Default for BufferLayout {
    fn default() -> Self {
        BufferLayout {
            banks: 18,
            bank_words: 1024,
            signal_banks: 2,
        }
    }
}

impl BufferLayout {
    pub fn total_words(&self) -> usize {
        self.banks as usize * self.bank_words as usize
    }

    pub fn total_bytes(&self) -> usize {
        self.total_words() * 8
    }

    /// First word of the signal-processing region.
    pub fn signal_base(&self) -> usize {
        (self.banks - self.signal_banks.min(self.banks)) as usize * self.bank_words as usize
    }

    pub fn linear(&self, bank: u32, offset: u32) -> Result<usize, MemError> {
        if bank >= self.banks || offset >= self.bank_words {
            return Err(MemError::BadBankAddress {
                bank,
                offset,
                banks: self.banks,
                bank_words: self.bank_words,
            });
        }
        Ok(bank as usize * self.bank_words as usize + offset as usize)
    }

    pub fn split(&self, word: usize) -> (u32, u32) {
        let bw = self.bank_words as usize;
        ((word / bw) as u32, (word % bw) as u32)
    }
}

/// Banked on-chip buffer of 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnChipBuffer {
    layout: BufferLayout,
    words: Vec<u64>,
}

impl OnChipBuffer {
    pub fn new(layout: BufferLayout) -> Self {
        OnChipBuffer {
            layout,
            words: vec![0; layout.total_words()],
        }
    }

    pub fn layout(&self) -> &BufferLayout {
        &self.layout
    }

    pub fn len_words(&self) -> usize {
        self.words.len()
    }

    fn check(&self, addr: usize, len: usize) -> Result<(), MemError> {
        if addr.checked_add(len).is_none_or(|end| end > self.words.len()) {
            return Err(MemError::OnChipOutOfBounds {
                addr,
                len,
                size: self.words.len(),
            });
        }
        Ok(())
    }

    /// Read the word at byte address `addr`.
    pub fn read_word(&self, addr: usize) -> Result<Word64, MemError> {
        if !addr.is_multiple_of(8) {
            return Err(MemError::Unaligned(addr));
        }
        self.word(addr / 8)
    }

    pub fn write_word(&mut self, addr: usize, w: Word64) -> Result<(), MemError> {
        if !addr.is_multiple_of(8) {
            return Err(MemError::Unaligned(addr));
        }
        self.set_word(addr / 8, w)
    }

    /// Read by word index.
    pub fn word(&self, index: usize) -> Result<Word64, MemError> {
        self.check(index, 1)?;
        Ok(Word64(self.words[index]))
    }

    pub fn set_word(&mut self, index: usize, w: Word64) -> Result<(), MemError> {
        self.check(index, 1)?;
        self.words[index] = w.0;
        Ok(())
    }

    pub fn words(&self, index: usize, len: usize) -> Result<&[u64], MemError> {
        self.check(index, len)?;
        Ok(&self.words[index..index + len])
    }

    pub fn words_mut(&mut self, index: usize, len: usize) -> Result<&mut [u64], MemError> {
        self.check(index, len)?;
        Ok(&mut self.words[index..index + len])
    }

    /// Read element `index` of a `bits`-wide packed tensor, sign-extended.
    /// Elements never straddle a word because every width divides 64.
    pub fn element(&self, index: usize, bits: u32) -> Result<i64, MemError> {
        let bit = index * bits as usize;
        let w = self.word(bit / 64)?.0;
        let raw = (w >> (bit % 64)) & crate::fixed::mask(bits);
        Ok(crate::fixed::sign_extend(raw, bits))
    }

    /// Store the low `bits` of `value` as element `index`.
    pub fn set_element(&mut self, index: usize, bits: u32, value: i64) -> Result<(), MemError> {
        let bit = index * bits as usize;
        let word = bit / 64;
        self.check(word, 1)?;
        let shift = bit % 64;
        let m = crate::fixed::mask(bits) << shift;
        self.words[word] = (self.words[word] & !m) | (((value as u64) << shift) & m);
        Ok(())
    }
}

/// Timing parameters of the off-chip interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DmaTiming {
    /// Sustained bandwidth in MB/s; `None` (JSON `null`) models an
    /// unlimited interface.
    pub bandwidth_mbps: Option<u32>,
    pub frequency_mhz: u32,
    pub setup_latency: u64,
}

impl Default for DmaTiming {
    fn default() -> Self {
        DmaTiming {
            bandwidth_mbps: Some(1600),
            frequency_mhz: 100,
            setup_latency: 20,
        }
    }
}

impl DmaTiming {
    /// `setup + ceil(len / (bandwidth / frequency))`, in integer arithmetic.
    pub fn cycles(&self, len_bytes: u64) -> u64 {
        let transfer = match self.bandwidth_mbps {
            None => 0,
            Some(bw) => (len_bytes * self.frequency_mhz as u64).div_ceil(bw.max(1) as u64),
        };
        self.setup_latency + transfer
    }
}

/// Byte-addressable off-chip memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffChipMemory {
    bytes: Vec<u8>,
}

impl OffChipMemory {
    pub fn new(size: usize) -> Self {
        OffChipMemory { bytes: vec![0; size] }
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    fn check(&self, addr: usize, len: usize) -> Result<(), MemError> {
        if addr.checked_add(len).is_none_or(|end| end > self.bytes.len()) {
            return Err(MemError::OffChipOutOfBounds {
                addr,
                len,
                size: self.bytes.len(),
            });
        }
        Ok(())
    }

    pub fn bytes(&self, addr: usize, len: usize) -> Result<&[u8], MemError> {
        self.check(addr, len)?;
        Ok(&self.bytes[addr..addr + len])
    }

    pub fn write_bytes(&mut self, addr: usize, data: &[u8]) -> Result<(), MemError> {
        self.check(addr, data.len())?;
        self.bytes[addr..addr + data.len()].copy_from_slice(data);
        Ok(())
    }

    pub fn read_word(&self, addr: usize) -> Result<Word64, MemError> {
        if !addr.is_multiple_of(8) {
            return Err(MemError::Unaligned(addr));
        }
        let b = self.bytes(addr, 8)?;
        Ok(Word64(u64::from_le_bytes(b.try_into().expect("8 bytes"))))
    }

    pub fn write_word(&mut self, addr: usize, w: Word64) -> Result<(), MemError> {
        if !addr.is_multiple_of(8) {
            return Err(MemError::Unaligned(addr));
        }
        self.write_bytes(addr, &w.0.to_le_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Load,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmaDescriptor {
    pub direction: Direction,
    pub dram_addr: u32,
    pub bank_start: u32,
    pub bank_offset: u32,
    pub length_bytes: u32,
}

impl DmaDescriptor {
    /// Word range touched on chip.
    pub fn onchip_range(&self, layout: &BufferLayout) -> Result<(usize, usize), MemError> {
        if !self.length_bytes.is_multiple_of(8) {
            return Err(MemError::RaggedLength(self.length_bytes));
        }
        let start = layout.linear(self.bank_start, self.bank_offset)?;
        Ok((start, self.length_bytes as usize / 8))
    }
}

/// Move data between the two memories and return the cycles consumed.
/// Nothing is modified if either side is out of bounds.
pub fn dma_transfer(
    d: &DmaDescriptor,
    onchip: &mut OnChipBuffer,
    offchip: &mut OffChipMemory,
    timing: &DmaTiming,
) -> Result<u64, MemError> {
    let (start, words) = d.onchip_range(&onchip.layout)?;
    let len = d.length_bytes as usize;
    let dram = d.dram_addr as usize;
    offchip.check(dram, len)?;
    onchip.check(start, words)?;
    match d.direction {
        Direction::Load => {
            for i in 0..words {
                let b = &offchip.bytes[dram + 8 * i..dram + 8 * i + 8];
                onchip.words[start + i] = u64::from_le_bytes(b.try_into().expect("8 bytes"));
            }
        }
        Direction::Store => {
            for i in 0..words {
                offchip.bytes[dram + 8 * i..dram + 8 * i + 8].copy_from_slice(&onchip.words[start + i].to_le_bytes());
            }
        }
    }
    Ok(timing.cycles(len as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_is_128k_plus_16k() {
        let l = BufferLayout::default();
        assert_eq!(l.total_bytes(), 144 * 1024);
        assert_eq!(l.signal_base() * 8, 128 * 1024);
    }

    #[test]
    fn dma_cost_at_defaults() {
        let t = DmaTiming::default();
        assert_eq!(t.cycles(1600), 120);
        assert_eq!(t.cycles(0), 20);
        assert_eq!(t.cycles(1), 21);
        let unlimited = DmaTiming {
            bandwidth_mbps: None,
            ..t
        };
        assert_eq!(unlimited.cycles(1 << 20), 20);
    }

    #[test]
    fn dma_cost_linear_above_setup() {
        let t = DmaTiming::default();
        let mut prev = t.cycles(0);
        for len in (8..4096).step_by(8) {
            let c = t.cycles(len);
            assert!(c >= prev);
            prev = c;
        }
        assert_eq!(t.cycles(16 * 100) - t.setup_latency, 100);
        assert_eq!(t.cycles(16 * 200) - t.setup_latency, 200);
    }

    #[test]
    fn word_access() {
        let mut m = OnChipBuffer::new(BufferLayout::default());
        assert_eq!(m.read_word(64).unwrap(), Word64(0));
        m.write_word(64, Word64(0xDEAD_BEEF)).unwrap();
        assert_eq!(m.read_word(64).unwrap(), Word64(0xDEAD_BEEF));
        assert_eq!(m.read_word(56).unwrap(), Word64(0));
        assert_eq!(m.read_word(65), Err(MemError::Unaligned(65)));
        assert!(m.read_word(144 * 1024).is_err());

        let mut d = OffChipMemory::new(64);
        d.write_word(8, Word64(7)).unwrap();
        assert_eq!(d.read_word(8).unwrap(), Word64(7));
        assert_eq!(d.read_word(3), Err(MemError::Unaligned(3)));
        assert!(d.read_word(64).is_err());
    }

    #[test]
    fn packed_elements() {
        let mut m = OnChipBuffer::new(BufferLayout {
            banks: 1,
            bank_words: 4,
            signal_banks: 0,
        });
        for bits in [4u32, 8, 16, 32] {
            let n = 64 / bits as usize * 2;
            for i in 0..n {
                let v = (i as i64 * 3 - 5) % (1 << (bits - 1));
                m.set_element(i, bits, v).unwrap();
            }
            for i in 0..n {
                let v = (i as i64 * 3 - 5) % (1 << (bits - 1));
                assert_eq!(m.element(i, bits).unwrap(), v);
            }
        }
    }

    #[test]
    fn load_store_round_trip() {
        let layout = BufferLayout::default();
        let mut on = OnChipBuffer::new(layout);
        let mut off = OffChipMemory::new(4096);
        let pattern: Vec<u8> = (0..256).map(|i| (i * 7 + 1) as u8).collect();
        off.write_bytes(512, &pattern).unwrap();
        let snapshot = off.clone();
        let t = DmaTiming::default();
        let load = DmaDescriptor {
            direction: Direction::Load,
            dram_addr: 512,
            bank_start: 3,
            bank_offset: 10,
            length_bytes: 256,
        };
        assert_eq!(dma_transfer(&load, &mut on, &mut off, &t).unwrap(), 20 + 16);
        let store = DmaDescriptor {
            direction: Direction::Store,
            ..load
        };
        dma_transfer(&store, &mut on, &mut off, &t).unwrap();
        assert_eq!(off, snapshot);

        let empty = DmaDescriptor {
            length_bytes: 0,
            ..load
        };
        let before = on.clone();
        assert_eq!(dma_transfer(&empty, &mut on, &mut off, &t).unwrap(), 20);
        assert_eq!(on, before);
    }

    #[test]
    fn dma_bounds() {
        let mut on = OnChipBuffer::new(BufferLayout::default());
        let mut off = OffChipMemory::new(64);
        let t = DmaTiming::default();
        let d = DmaDescriptor {
            direction: Direction::Load,
            dram_addr: 32,
            bank_start: 0,
            bank_offset: 0,
            length_bytes: 64,
        };
        assert!(matches!(
            dma_transfer(&d, &mut on, &mut off, &t),
            Err(MemError::OffChipOutOfBounds { .. })
        ));
        let d = DmaDescriptor {
            length_bytes: 12,
            dram_addr: 0,
            ..d
        };
        assert_eq!(dma_transfer(&d, &mut on, &mut off, &t), Err(MemError::RaggedLength(12)));
        let d = DmaDescriptor {
            length_bytes: 16,
            bank_start: 17,
            bank_offset: 1023,
            ..d
        };
        assert!(matches!(
            dma_transfer(&d, &mut on, &mut off, &t),
            Err(MemError::OnChipOutOfBounds { .. })
        ));
    }
}
