//! Instruction set, text assembler/disassembler and binary codec.
//!
//! The five shuffling instructions (`rd-buf`, `wr-buf`, `ctrl-bitwidth`,
//! `ctrl-shuffling`, `ctrl-padding`) each encode into one 32-bit word. The
//! tensor plumbing instructions (`load-tile`, `store-tile`, `conv-exec`)
//! carry 32-bit addresses and use a head word followed by extension words.
//! `shuffle-exec` and `halt` are single words.
//!
//! Head word layout: opcode in bits `[31:27]`, fields packed LSB-first in
//! declaration order below it, unused bits zero.
//!
//! Text syntax is one instruction per line, `mnemonic key=value ...`, with
//! `#` starting a comment. Numbers are decimal or `0x` hexadecimal.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use thiserror::Error;

use crate::mac_array::Width;

pub const MAX_BANK: u32 = 63;
pub const MAX_BANK_OFFSET: u32 = (1 << 14) - 1;
/// Longest `rd-buf`/`wr-buf` transfer, equal to the BCIF staging capacity.
pub const MAX_BUF_LENGTH: u32 = 64;
pub const MAX_SHIFT: u8 = 31;

/// Output element width of a `conv-exec` (4, 8, 16 or raw 32-bit
/// accumulators).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "u32", into = "u32"))]
pub struct OutBits(u8);

impl OutBits {
    pub const B4: OutBits = OutBits(4);
    pub const B8: OutBits = OutBits(8);
    pub const B16: OutBits = OutBits(16);
    pub const B32: OutBits = OutBits(32);

    pub fn new(bits: u32) -> Option<OutBits> {
        matches!(bits, 4 | 8 | 16 | 32).then_some(OutBits(bits as u8))
    }

    pub fn bits(self) -> u32 {
        self.0 as u32
    }

    fn code(self) -> u32 {
        match self.0 {
            4 => 0,
            8 => 1,
            16 => 2,
            _ => 3,
        }
    }

    fn from_code(c: u32) -> OutBits {
        OutBits(4 << c)
    }
}

impl From<Width> for OutBits {
    fn from(w: Width) -> OutBits {
        OutBits(w.bits() as u8)
    }
}

impl TryFrom<u32> for OutBits {
    type Error = IsaError;

    fn try_from(v: u32) -> Result<Self, IsaError> {
        OutBits::new(v).ok_or(IsaError::OutOfRange {
            field: "out-bits",
            value: v as u64,
        })
    }
}

impl From<OutBits> for u32 {
    fn from(o: OutBits) -> u32 {
        o.bits()
    }
}

/// A DMA transfer between off-chip memory and the on-chip buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TileTransfer {
    pub dram_addr: u32,
    pub bank_start: u32,
    pub bank_offset: u32,
    pub length_bytes: u32,
}

/// A strided multiply-accumulate over the computing array.
///
/// For every output `(r, c)`:
/// `out[r, c] = requant(sum_k fmap[r, k] * weight[c, k])` with
/// `fmap[r, k]` at element `fmap_base + r*fmap_row_stride +
/// (k / fmap_seg_len)*fmap_seg_stride + k % fmap_seg_len`, `weight[c, k]`
/// at `weight_base + c*k_len + k` and the result stored at
/// `out_base + r*out_row_stride + c*out_col_stride`. All bases are element
/// addresses in the width of their tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvExec {
    pub fmap_base: u32,
    pub weight_base: u32,
    pub out_base: u32,
    pub out_rows: u32,
    pub out_cols: u32,
    pub k_len: u32,
    pub fmap_row_stride: u32,
    pub fmap_seg_len: u32,
    pub fmap_seg_stride: u32,
    pub out_row_stride: u32,
    pub out_col_stride: u32,
    pub shift: u8,
    pub out_bits: OutBits,
    pub relu: bool,
}

impl ConvExec {
    /// A dense `rows x cols` GEMM with contiguous operands and row-major
    /// output.
    pub fn gemm(fmap_base: u32, weight_base: u32, out_base: u32, rows: u32, cols: u32, k_len: u32) -> Self {
        ConvExec {
            fmap_base,
            weight_base,
            out_base,
            out_rows: rows,
            out_cols: cols,
            k_len,
            fmap_row_stride: k_len,
            fmap_seg_len: k_len.max(1),
            fmap_seg_stride: 0,
            out_row_stride: cols,
            out_col_stride: 1,
            shift: 0,
            out_bits: OutBits::B32,
            relu: false,
        }
    }

    pub fn fmap_index(&self, r: u32, k: u32) -> u64 {
        self.fmap_base as u64
            + r as u64 * self.fmap_row_stride as u64
            + (k / self.fmap_seg_len) as u64 * self.fmap_seg_stride as u64
            + (k % self.fmap_seg_len) as u64
    }

    pub fn weight_index(&self, c: u32, k: u32) -> u64 {
        self.weight_base as u64 + c as u64 * self.k_len as u64 + k as u64
    }

    pub fn out_index(&self, r: u32, c: u32) -> u64 {
        self.out_base as u64 + r as u64 * self.out_row_stride as u64 + c as u64 * self.out_col_stride as u64
    }

    /// Lane products this instruction issues.
    pub fn mac_count(&self) -> u64 {
        self.out_rows as u64 * self.out_cols as u64 * self.k_len as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Instruction {
    Halt,
    RdBuf {
        bank_start: u32,
        bank_offset: u32,
        length: u32,
    },
    WrBuf {
        bank_start: u32,
        bank_offset: u32,
        length: u32,
    },
    CtrlBitwidth {
        a_bits: Width,
        w_bits: Width,
    },
    CtrlShuffling {
        unit: u8,
        sel: u8,
        split: u8,
        finish: bool,
    },
    CtrlPadding {
        position: u8,
        value: u16,
    },
    LoadTile(TileTransfer),
    StoreTile(TileTransfer),
    ConvExec(ConvExec),
    ShuffleExec {
        src_base: u8,
        dst_base: u8,
        word_count: u8,
    },
}

mod opcode {
    pub const HALT: u32 = 0;
    pub const RD_BUF: u32 = 1;
    pub const WR_BUF: u32 = 2;
    pub const CTRL_BITWIDTH: u32 = 3;
    pub const CTRL_SHUFFLING: u32 = 4;
    pub const CTRL_PADDING: u32 = 5;
    pub const LOAD_TILE: u32 = 6;
    pub const STORE_TILE: u32 = 7;
    pub const CONV_EXEC: u32 = 8;
    pub const SHUFFLE_EXEC: u32 = 9;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("{field} = {value} out of range")]
    OutOfRange { field: &'static str, value: u64 },
    #[error("unknown opcode {0}")]
    UnknownOpcode(u32),
    #[error("reserved bits set in {0:#010x}")]
    ReservedBits(u32),
    #[error("instruction truncated: need {need} words, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("binary length {0} is not a multiple of 4 bytes")]
    RaggedBinary(usize),
}

fn check(field: &'static str, value: u64, max: u64) -> Result<(), IsaError> {
    if value > max {
        Err(IsaError::OutOfRange { field, value })
    } else {
        Ok(())
    }
}

/// LSB-first field packer for head-word payloads.
struct Packer {
    word: u32,
    pos: u32,
}

impl Packer {
    fn new(op: u32) -> Self {
        Packer { word: op << 27, pos: 0 }
    }

    fn put(mut self, value: u32, bits: u32) -> Self {
        debug_assert!(value < (1u64 << bits) as u32 || bits == 32);
        self.word |= value << self.pos;
        self.pos += bits;
        self
    }
}

struct Unpacker {
    word: u32,
    pos: u32,
}

impl Unpacker {
    fn new(word: u32) -> Self {
        Unpacker { word, pos: 0 }
    }

    fn take(&mut self, bits: u32) -> u32 {
        let v = (self.word >> self.pos) & ((1u32 << bits) - 1);
        self.pos += bits;
        v
    }

    /// Remaining payload bits must be zero.
    fn finish(self) -> Result<(), IsaError> {
        let payload_mask = (1u32 << 27) - 1;
        if (self.word & payload_mask) >> self.pos != 0 {
            return Err(IsaError::ReservedBits(self.word));
        }
        Ok(())
    }
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instruction::Halt => "halt",
            Instruction::RdBuf { .. } => "rd-buf",
            Instruction::WrBuf { .. } => "wr-buf",
            Instruction::CtrlBitwidth { .. } => "ctrl-bitwidth",
            Instruction::CtrlShuffling { .. } => "ctrl-shuffling",
            Instruction::CtrlPadding { .. } => "ctrl-padding",
            Instruction::LoadTile(_) => "load-tile",
            Instruction::StoreTile(_) => "store-tile",
            Instruction::ConvExec(_) => "conv-exec",
            Instruction::ShuffleExec { .. } => "shuffle-exec",
        }
    }

    /// Encoded size in 32-bit words.
    pub fn encoded_len(&self) -> usize {
        match self {
            Instruction::LoadTile(_) | Instruction::StoreTile(_) => 3,
            Instruction::ConvExec(_) => 12,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), IsaError> {
        match *self {
            Instruction::Halt | Instruction::CtrlBitwidth { .. } => Ok(()),
            Instruction::RdBuf {
                bank_start,
                bank_offset,
                length,
            }
            | Instruction::WrBuf {
                bank_start,
                bank_offset,
                length,
            } => {
                check("bank-start", bank_start as u64, MAX_BANK as u64)?;
                check("bank-offset", bank_offset as u64, MAX_BANK_OFFSET as u64)?;
                check("length", length as u64, MAX_BUF_LENGTH as u64)
            }
            Instruction::CtrlShuffling { unit, sel, split, .. } => {
                check("unit", unit as u64, 15)?;
                check("sel", sel as u64, 15)?;
                check("split", split as u64, 15)
            }
            Instruction::CtrlPadding { position, .. } => check("position", position as u64, 15),
            Instruction::LoadTile(t) | Instruction::StoreTile(t) => {
                check("bank-start", t.bank_start as u64, MAX_BANK as u64)?;
                check("bank-offset", t.bank_offset as u64, MAX_BANK_OFFSET as u64)?;
                if t.length_bytes % 8 != 0 {
                    return Err(IsaError::OutOfRange {
                        field: "length-bytes",
                        value: t.length_bytes as u64,
                    });
                }
                Ok(())
            }
            Instruction::ConvExec(c) => {
                check("shift", c.shift as u64, MAX_SHIFT as u64)?;
                if c.fmap_seg_len == 0 {
                    return Err(IsaError::OutOfRange {
                        field: "seg-len",
                        value: 0,
                    });
                }
                Ok(())
            }
            Instruction::ShuffleExec {
                src_base,
                dst_base,
                word_count,
            } => {
                check("src", src_base as u64, 63)?;
                check("dst", dst_base as u64, 63)?;
                check("count", word_count as u64, 64)?;
                check("dst+count", dst_base as u64 + word_count as u64, 64)
            }
        }
    }

    /// Append the binary encoding of a valid instruction.
    pub fn encode_into(&self, out: &mut Vec<u32>) -> Result<(), IsaError> {
        use opcode::*;
        self.validate()?;
        match *self {
            Instruction::Halt => out.push(HALT << 27),
            Instruction::RdBuf {
                bank_start,
                bank_offset,
                length,
            }
            | Instruction::WrBuf {
                bank_start,
                bank_offset,
                length,
            } => {
                let op = if matches!(self, Instruction::RdBuf { .. }) {
                    RD_BUF
                } else {
                    WR_BUF
                };
                out.push(
                    Packer::new(op)
                        .put(bank_start, 6)
                        .put(bank_offset, 14)
                        .put(length, 7)
                        .word,
                );
            }
            Instruction::CtrlBitwidth { a_bits, w_bits } => out.push(
                Packer::new(CTRL_BITWIDTH)
                    .put(a_bits.code(), 2)
                    .put(w_bits.code(), 2)
                    .word,
            ),
            Instruction::CtrlShuffling {
                unit,
                sel,
                split,
                finish,
            } => out.push(
                Packer::new(CTRL_SHUFFLING)
                    .put(unit as u32, 4)
                    .put(sel as u32, 4)
                    .put(split as u32, 4)
                    .put(finish as u32, 1)
                    .word,
            ),
            Instruction::CtrlPadding { position, value } => out.push(
                Packer::new(CTRL_PADDING)
                    .put(position as u32, 4)
                    .put(value as u32, 16)
                    .word,
            ),
            Instruction::LoadTile(t) | Instruction::StoreTile(t) => {
                let op = if matches!(self, Instruction::LoadTile(_)) {
                    LOAD_TILE
                } else {
                    STORE_TILE
                };
                out.push(Packer::new(op).put(t.bank_start, 6).put(t.bank_offset, 14).word);
                out.push(t.dram_addr);
                out.push(t.length_bytes);
            }
            Instruction::ConvExec(c) => {
                out.push(
                    Packer::new(CONV_EXEC)
                        .put(c.shift as u32, 5)
                        .put(c.out_bits.code(), 2)
                        .put(c.relu as u32, 1)
                        .word,
                );
                out.extend_from_slice(&[
                    c.fmap_base,
                    c.weight_base,
                    c.out_base,
                    c.out_rows,
                    c.out_cols,
                    c.k_len,
                    c.fmap_row_stride,
                    c.fmap_seg_len,
                    c.fmap_seg_stride,
                    c.out_row_stride,
                    c.out_col_stride,
                ]);
            }
            Instruction::ShuffleExec {
                src_base,
                dst_base,
                word_count,
            } => out.push(
                Packer::new(SHUFFLE_EXEC)
                    .put(src_base as u32, 6)
                    .put(dst_base as u32, 6)
                    .put(word_count as u32, 7)
                    .word,
            ),
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u32>, IsaError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out)?;
        Ok(out)
    }

    /// Decode one instruction from the front of `words`, returning it and
    /// the number of words consumed.
    pub fn decode(words: &[u32]) -> Result<(Instruction, usize), IsaError> {
        use opcode::*;
        let head = *words.first().ok_or(IsaError::Truncated { need: 1, have: 0 })?;
        let op = head >> 27;
        let mut u = Unpacker::new(head);
        let need = |n: usize| {
            if words.len() < n {
                Err(IsaError::Truncated {
                    need: n,
                    have: words.len(),
                })
            } else {
                Ok(())
            }
        };
        let (inst, len) = match op {
            HALT => (Instruction::Halt, 1),
            RD_BUF | WR_BUF => {
                let (bank_start, bank_offset, length) = (u.take(6), u.take(14), u.take(7));
                let i = if op == RD_BUF {
                    Instruction::RdBuf {
                        bank_start,
                        bank_offset,
                        length,
                    }
                } else {
                    Instruction::WrBuf {
                        bank_start,
                        bank_offset,
                        length,
                    }
                };
                (i, 1)
            }
            CTRL_BITWIDTH => {
                let a = u.take(2);
                let w = u.take(2);
                let a_bits = Width::from_code(a).ok_or(IsaError::OutOfRange {
                    field: "a-bits",
                    value: a as u64,
                })?;
                let w_bits = Width::from_code(w).ok_or(IsaError::OutOfRange {
                    field: "w-bits",
                    value: w as u64,
                })?;
                (Instruction::CtrlBitwidth { a_bits, w_bits }, 1)
            }
            CTRL_SHUFFLING => (
                Instruction::CtrlShuffling {
                    unit: u.take(4) as u8,
                    sel: u.take(4) as u8,
                    split: u.take(4) as u8,
                    finish: u.take(1) == 1,
                },
                1,
            ),
            CTRL_PADDING => (
                Instruction::CtrlPadding {
                    position: u.take(4) as u8,
                    value: u.take(16) as u16,
                },
                1,
            ),
            LOAD_TILE | STORE_TILE => {
                need(3)?;
                let t = TileTransfer {
                    bank_start: u.take(6),
                    bank_offset: u.take(14),
                    dram_addr: words[1],
                    length_bytes: words[2],
                };
                let i = if op == LOAD_TILE {
                    Instruction::LoadTile(t)
                } else {
                    Instruction::StoreTile(t)
                };
                (i, 3)
            }
            CONV_EXEC => {
                need(12)?;
                let shift = u.take(5) as u8;
                let out_bits = OutBits::from_code(u.take(2));
                let relu = u.take(1) == 1;
                let e = &words[1..12];
                (
                    Instruction::ConvExec(ConvExec {
                        fmap_base: e[0],
                        weight_base: e[1],
                        out_base: e[2],
                        out_rows: e[3],
                        out_cols: e[4],
                        k_len: e[5],
                        fmap_row_stride: e[6],
                        fmap_seg_len: e[7],
                        fmap_seg_stride: e[8],
                        out_row_stride: e[9],
                        out_col_stride: e[10],
                        shift,
                        out_bits,
                        relu,
                    }),
                    12,
                )
            }
            SHUFFLE_EXEC => (
                Instruction::ShuffleExec {
                    src_base: u.take(6) as u8,
                    dst_base: u.take(6) as u8,
                    word_count: u.take(7) as u8,
                },
                1,
            ),
            other => return Err(IsaError::UnknownOpcode(other)),
        };
        u.finish()?;
        inst.validate()?;
        Ok((inst, len))
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())?;
        match *self {
            Instruction::Halt => Ok(()),
            Instruction::RdBuf {
                bank_start,
                bank_offset,
                length,
            }
            | Instruction::WrBuf {
                bank_start,
                bank_offset,
                length,
            } => {
                write!(f, " bank-start={bank_start} bank-offset={bank_offset} length={length}")
            }
            Instruction::CtrlBitwidth { a_bits, w_bits } => write!(f, " a-bits={a_bits} w-bits={w_bits}"),
            Instruction::CtrlShuffling {
                unit,
                sel,
                split,
                finish,
            } => {
                write!(f, " unit={unit} sel={sel} split={split} finish={}", finish as u8)
            }
            Instruction::CtrlPadding { position, value } => write!(f, " position={position} value={value:#x}"),
            Instruction::LoadTile(t) | Instruction::StoreTile(t) => write!(
                f,
                " dram-addr={:#x} bank-start={} bank-offset={} length-bytes={}",
                t.dram_addr, t.bank_start, t.bank_offset, t.length_bytes
            ),
            Instruction::ConvExec(c) => write!(
                f,
                " fmap={} weight={} out={} rows={} cols={} k-len={} row-stride={} seg-len={} seg-stride={} \
                 out-row-stride={} out-col-stride={} shift={} out-bits={} relu={}",
                c.fmap_base,
                c.weight_base,
                c.out_base,
                c.out_rows,
                c.out_cols,
                c.k_len,
                c.fmap_row_stride,
                c.fmap_seg_len,
                c.fmap_seg_stride,
                c.out_row_stride,
                c.out_col_stride,
                c.shift,
                c.out_bits.bits(),
                c.relu as u8
            ),
            Instruction::ShuffleExec {
                src_base,
                dst_base,
                word_count,
            } => {
                write!(f, " src={src_base} dst={dst_base} count={word_count}")
            }
        }
    }
}

/// An ordered instruction stream. Source line numbers are kept when the
/// program came from text; they do not take part in equality.
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    lines: Vec<usize>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.instructions == other.instructions
    }
}

impl Eq for Program {}

impl From<Vec<Instruction>> for Program {
    fn from(instructions: Vec<Instruction>) -> Self {
        Program {
            instructions,
            lines: Vec::new(),
        }
    }
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, i: Instruction) {
        self.instructions.push(i);
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Length of the buffer/fabric control sequence: `rd-buf`, `wr-buf`,
    /// `ctrl-bitwidth`, `ctrl-padding`, and `ctrl-shuffling` with each run of
    /// consecutive units reading the same source word counted once.
    /// Triggers (`shuffle-exec`), compute, DMA and `halt` are not counted.
    pub fn control_sequence_len(&self) -> usize {
        let mut n = 0;
        let mut prev_sel = None;
        for i in &self.instructions {
            match *i {
                Instruction::CtrlShuffling { sel, .. } => {
                    if prev_sel != Some(sel) {
                        n += 1;
                    }
                    prev_sel = Some(sel);
                    continue;
                }
                Instruction::RdBuf { .. }
                | Instruction::WrBuf { .. }
                | Instruction::CtrlBitwidth { .. }
                | Instruction::CtrlPadding { .. } => n += 1,
                _ => {}
            }
            prev_sel = None;
        }
        n
    }

    /// 1-based source line of instruction `index`, if assembled from text.
    pub fn source_line(&self, index: usize) -> Option<usize> {
        self.lines.get(index).copied()
    }

    pub fn to_words(&self) -> Result<Vec<u32>, IsaError> {
        let mut out = Vec::new();
        for i in &self.instructions {
            i.encode_into(&mut out)?;
        }
        Ok(out)
    }

    pub fn from_words(mut words: &[u32]) -> Result<Program, IsaError> {
        let mut p = Program::new();
        while !words.is_empty() {
            let (i, n) = Instruction::decode(words)?;
            p.push(i);
            words = &words[n..];
        }
        Ok(p)
    }

    /// Little-endian byte image.
    pub fn to_bytes(&self) -> Result<Vec<u8>, IsaError> {
        Ok(self.to_words()?.iter().flat_map(|w| w.to_le_bytes()).collect())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Program, IsaError> {
        if !bytes.len().is_multiple_of(4) {
            return Err(IsaError::RaggedBinary(bytes.len()));
        }
        let words: Vec<u32> = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Program::from_words(&words)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub column: usize,
    pub kind: AsmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("missing operand `{0}`")]
    MissingOperand(&'static str),
    #[error("unexpected operand `{0}`")]
    UnexpectedOperand(String),
    #[error("duplicate operand `{0}`")]
    DuplicateOperand(String),
    #[error("malformed operand `{0}` (expected key=value)")]
    Malformed(String),
    #[error("invalid number `{0}`")]
    BadNumber(String),
    #[error("{field} = {value} out of range")]
    OutOfRange { field: String, value: u64 },
}

fn parse_number(s: &str) -> Option<u64> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(&hex.replace('_', ""), 16).ok()
    } else {
        s.replace('_', "").parse().ok()
    }
}

struct Operands<'a> {
    line: usize,
    items: Vec<(&'a str, &'a str, usize, bool)>,
}

impl<'a> Operands<'a> {
    fn err(&self, column: usize, kind: AsmErrorKind) -> AsmError {
        AsmError {
            line: self.line,
            column,
            kind,
        }
    }

    fn get(&mut self, key: &'static str, max: u64) -> Result<u64, AsmError> {
        let line = self.line;
        let Some(item) = self.items.iter_mut().find(|it| it.0 == key) else {
            return Err(AsmError {
                line,
                column: 1,
                kind: AsmErrorKind::MissingOperand(key),
            });
        };
        item.3 = true;
        let (value, column) = (item.1, item.2);
        let v = parse_number(value).ok_or_else(|| self.err(column, AsmErrorKind::BadNumber(value.into())))?;
        if v > max {
            return Err(self.err(
                column,
                AsmErrorKind::OutOfRange {
                    field: key.into(),
                    value: v,
                },
            ));
        }
        Ok(v)
    }

    fn flag(&mut self, key: &'static str) -> Result<bool, AsmError> {
        Ok(self.get(key, 1)? == 1)
    }

    fn width(&mut self, key: &'static str) -> Result<Width, AsmError> {
        let v = self.get(key, 16)?;
        Width::from_bits(v as u32).ok_or_else(|| AsmError {
            line: self.line,
            column: self.items.iter().find(|it| it.0 == key).map_or(1, |it| it.2),
            kind: AsmErrorKind::OutOfRange {
                field: key.into(),
                value: v,
            },
        })
    }

    fn finish(self) -> Result<(), AsmError> {
        if let Some(it) = self.items.iter().find(|it| !it.3) {
            return Err(self.err(it.2, AsmErrorKind::UnexpectedOperand(it.0.into())));
        }
        Ok(())
    }
}

fn parse_line(line_no: usize, text: &str) -> Result<Option<Instruction>, AsmError> {
    let code = text.split('#').next().unwrap_or("");
    let mut tokens = code
        .split_whitespace()
        .map(|t| (t, t.as_ptr() as usize - text.as_ptr() as usize + 1));
    let Some((mnemonic, mcol)) = tokens.next() else {
        return Ok(None);
    };
    let mut ops = Operands {
        line: line_no,
        items: Vec::new(),
    };
    for (tok, col) in tokens {
        let Some((k, v)) = tok.split_once('=') else {
            return Err(ops.err(col, AsmErrorKind::Malformed(tok.into())));
        };
        if ops.items.iter().any(|it| it.0 == k) {
            return Err(ops.err(col, AsmErrorKind::DuplicateOperand(k.into())));
        }
        ops.items.push((k, v, col, false));
    }
    let u32max = u32::MAX as u64;
    let inst = match mnemonic.to_ascii_lowercase().as_str() {
        "halt" => Instruction::Halt,
        m @ ("rd-buf" | "wr-buf") => {
            let bank_start = ops.get("bank-start", MAX_BANK as u64)? as u32;
            let bank_offset = ops.get("bank-offset", MAX_BANK_OFFSET as u64)? as u32;
            let length = ops.get("length", MAX_BUF_LENGTH as u64)? as u32;
            if m == "rd-buf" {
                Instruction::RdBuf {
                    bank_start,
                    bank_offset,
                    length,
                }
            } else {
                Instruction::WrBuf {
                    bank_start,
                    bank_offset,
                    length,
                }
            }
        }
        "ctrl-bitwidth" => Instruction::CtrlBitwidth {
            a_bits: ops.width("a-bits")?,
            w_bits: ops.width("w-bits")?,
        },
        "ctrl-shuffling" => Instruction::CtrlShuffling {
            unit: ops.get("unit", 15)? as u8,
            sel: ops.get("sel", 15)? as u8,
            split: ops.get("split", 15)? as u8,
            finish: ops.flag("finish")?,
        },
        "ctrl-padding" => Instruction::CtrlPadding {
            position: ops.get("position", 15)? as u8,
            value: ops.get("value", 0xFFFF)? as u16,
        },
        m @ ("load-tile" | "store-tile") => {
            let t = TileTransfer {
                dram_addr: ops.get("dram-addr", u32max)? as u32,
                bank_start: ops.get("bank-start", MAX_BANK as u64)? as u32,
                bank_offset: ops.get("bank-offset", MAX_BANK_OFFSET as u64)? as u32,
                length_bytes: ops.get("length-bytes", u32max)? as u32,
            };
            if m == "load-tile" {
                Instruction::LoadTile(t)
            } else {
                Instruction::StoreTile(t)
            }
        }
        "conv-exec" => {
            let c = ConvExec {
                fmap_base: ops.get("fmap", u32max)? as u32,
                weight_base: ops.get("weight", u32max)? as u32,
                out_base: ops.get("out", u32max)? as u32,
                out_rows: ops.get("rows", u32max)? as u32,
                out_cols: ops.get("cols", u32max)? as u32,
                k_len: ops.get("k-len", u32max)? as u32,
                fmap_row_stride: ops.get("row-stride", u32max)? as u32,
                fmap_seg_len: ops.get("seg-len", u32max)? as u32,
                fmap_seg_stride: ops.get("seg-stride", u32max)? as u32,
                out_row_stride: ops.get("out-row-stride", u32max)? as u32,
                out_col_stride: ops.get("out-col-stride", u32max)? as u32,
                shift: ops.get("shift", MAX_SHIFT as u64)? as u8,
                out_bits: {
                    let v = ops.get("out-bits", 32)?;
                    OutBits::new(v as u32).ok_or(AsmError {
                        line: line_no,
                        column: mcol,
                        kind: AsmErrorKind::OutOfRange {
                            field: "out-bits".into(),
                            value: v,
                        },
                    })?
                },
                relu: ops.flag("relu")?,
            };
            Instruction::ConvExec(c)
        }
        "shuffle-exec" => Instruction::ShuffleExec {
            src_base: ops.get("src", 63)? as u8,
            dst_base: ops.get("dst", 63)? as u8,
            word_count: ops.get("count", 64)? as u8,
        },
        _ => {
            return Err(AsmError {
                line: line_no,
                column: mcol,
                kind: AsmErrorKind::UnknownMnemonic(mnemonic.into()),
            })
        }
    };
    ops.finish()?;
    inst.validate().map_err(|e| AsmError {
        line: line_no,
        column: mcol,
        kind: match e {
            IsaError::OutOfRange { field, value } => AsmErrorKind::OutOfRange {
                field: field.into(),
                value,
            },
            other => AsmErrorKind::Malformed(format!("{other}")),
        },
    })?;
    Ok(Some(inst))
}

/// Parse assembly text.
pub fn assemble(source: &str) -> Result<Program, AsmError> {
    let mut p = Program::new();
    for (i, line) in source.lines().enumerate() {
        if let Some(inst) = parse_line(i + 1, line)? {
            p.instructions.push(inst);
            p.lines.push(i + 1);
        }
    }
    Ok(p)
}

/// Canonical text form, one instruction per line.
pub fn disassemble(p: &Program) -> String {
    let mut s = String::new();
    for (k, i) in p.instructions.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        let _ = write!(s, "{i}");
    }
    s
}
