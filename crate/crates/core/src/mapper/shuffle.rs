//! Compiles element gathers into shuffling-fabric instruction sequences.
//!
//! A gather fills consecutive destination words; every destination element
//! is either a copy of some on-chip source element or a padding constant.
//! Per destination word the compiler stages the distinct source words
//! (one `rd-buf` per consecutive run), reprograms only the shuffling units
//! whose selection changed, issues the padding directives and one
//! `shuffle-exec`. Finished words collect in the BCIF output buffer and are
//! drained by `wr-buf` in runs of up to 64 words.

use alloc::vec::Vec;

use super::build::Builder;
use super::{invalid, MapError};
use crate::fabric::{STAGING_WORDS, WINDOW};
use crate::isa::Instruction;
use crate::memory::BufferLayout;

/// Source of one destination element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Copy on-chip element `index` (in units of the gather width).
    Elem(usize),
    /// Padding constant, raw bit pattern at the gather width.
    Const(u16),
}

/// Shuffling-unit selections known to be live in the machine.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShuffleState {
    units: [Option<(u8, u8)>; 16],
}

/// Append instructions writing `slots` to consecutive elements starting at
/// word `dst_word`. The tail of the last word is zero-padded. Sources must
/// not overlap the destination.
pub fn emit_gather(
    program: &mut Vec<Instruction>,
    state: &mut ShuffleState,
    layout: &BufferLayout,
    bits: u32,
    dst_word: usize,
    slots: &[Slot],
) -> Result<(), MapError> {
    let per_word = 64 / bits as usize;
    let nib = bits as usize / 4;
    let dst_words = slots.len().div_ceil(per_word);
    let dst = dst_word..dst_word + dst_words;
    let mut pending = 0usize;
    let mut batch_start = dst_word;
    for d in 0..dst_words {
        let word_slots: Vec<Slot> = (0..per_word)
            .map(|e| slots.get(d * per_word + e).copied().unwrap_or(Slot::Const(0)))
            .collect();
        let mut sources: Vec<usize> = word_slots
            .iter()
            .filter_map(|s| match s {
                Slot::Elem(i) => Some(i / per_word),
                Slot::Const(_) => None,
            })
            .collect();
        sources.sort_unstable();
        sources.dedup();
        if let Some(&w) = sources.iter().find(|w| dst.contains(w)) {
            return Err(invalid(alloc::format!(
                "gather source word {w} overlaps its destination"
            )));
        }
        debug_assert!(sources.len() <= WINDOW && sources.len() <= STAGING_WORDS);
        let mut i = 0;
        while i < sources.len() {
            let mut j = i + 1;
            while j < sources.len() && sources[j] == sources[j - 1] + 1 {
                j += 1;
            }
            let (bank_start, bank_offset) = layout.split(sources[i]);
            program.push(Instruction::RdBuf {
                bank_start,
                bank_offset,
                length: (j - i) as u32,
            });
            i = j;
        }
        let mut wanted: [Option<(u8, u8)>; 16] = [None; 16];
        let mut pads = Vec::new();
        for (e, s) in word_slots.iter().enumerate() {
            match *s {
                Slot::Elem(idx) => {
                    let sel = sources.binary_search(&(idx / per_word)).expect("staged") as u8;
                    for t in 0..nib {
                        wanted[e * nib + t] = Some((sel, ((idx % per_word) * nib + t) as u8));
                    }
                }
                Slot::Const(v) => pads.push((e as u8, v & (((1u32 << bits) - 1) as u16))),
            }
        }
        let mut changes: Vec<(u8, (u8, u8))> = Vec::new();
        for (u, &want) in wanted.iter().enumerate() {
            match (want, state.units[u]) {
                (Some(w), cur) if cur != Some(w) => changes.push((u as u8, w)),
                // Padded nibbles don't care, but every unit must be live.
                (None, None) => changes.push((u as u8, (0, 0))),
                _ => {}
            }
        }
        for (k, &(unit, (sel, split))) in changes.iter().enumerate() {
            program.push(Instruction::CtrlShuffling {
                unit,
                sel,
                split,
                finish: k + 1 == changes.len(),
            });
            state.units[unit as usize] = Some((sel, split));
        }
        for (position, value) in pads {
            program.push(Instruction::CtrlPadding { position, value });
        }
        program.push(Instruction::ShuffleExec {
            src_base: 0,
            dst_base: pending as u8,
            word_count: 1,
        });
        pending += 1;
        if pending == STAGING_WORDS || d + 1 == dst_words {
            let (bank_start, bank_offset) = layout.split(batch_start);
            program.push(Instruction::WrBuf {
                bank_start,
                bank_offset,
                length: pending as u32,
            });
            batch_start += pending;
            pending = 0;
        }
    }
    Ok(())
}

impl Builder {
    /// Gather at the current activation width.
    pub(crate) fn gather(&mut self, bits: u32, dst_word: usize, slots: &[Slot]) -> Result<(), MapError> {
        if self.bitwidth().map(|c| c.a_bits.bits()) != Some(bits) {
            return Err(invalid("gather width must equal the active activation width"));
        }
        let mut prog = core::mem::take(&mut self.program.instructions);
        let r = emit_gather(&mut prog, &mut self.shuffle, &self.layout, bits, dst_word, slots);
        self.program.instructions = prog;
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Machine, MachineConfig};
    use crate::isa::Program;
    use crate::mac_array::Width;
    use alloc::vec;

    fn run(bits: u32, src: &[i64], slots: &[Slot], dst_word: usize) -> (Vec<i64>, crate::CycleReport) {
        let w = Width::from_bits(bits).unwrap();
        let mut prog = vec![Instruction::CtrlBitwidth { a_bits: w, w_bits: w }];
        let mut st = ShuffleState::default();
        emit_gather(&mut prog, &mut st, &BufferLayout::default(), bits, dst_word, slots).unwrap();
        prog.push(Instruction::Halt);
        let mut m = Machine::new(MachineConfig::default());
        for (i, &v) in src.iter().enumerate() {
            m.onchip.set_element(i, bits, v).unwrap();
        }
        m.run_program(&Program::from(prog)).unwrap();
        let base = dst_word * 64 / bits as usize;
        let out = (0..slots.len())
            .map(|i| m.onchip.element(base + i, bits).unwrap())
            .collect();
        (out, *m.report())
    }

    #[test]
    fn reverses_elements_at_every_width() {
        for bits in [4u32, 8, 16] {
            let n = 40;
            let lim = 1i64 << (bits - 1);
            let src: Vec<i64> = (0..n as i64).map(|i| (i * 37) % (2 * lim) - lim).collect();
            let slots: Vec<Slot> = (0..n).rev().map(Slot::Elem).collect();
            let (out, _) = run(bits, &src, &slots, 100);
            let want: Vec<i64> = src.iter().rev().copied().collect();
            assert_eq!(out, want, "bits {bits}");
        }
    }

    #[test]
    fn constants_are_padded() {
        let src = [5, 6, 7, 8];
        let slots = [Slot::Const(0x4000), Slot::Const(0), Slot::Elem(2), Slot::Elem(1)];
        let (out, r) = run(16, &src, &slots, 8);
        assert_eq!(out, vec![0x4000, 0, 7, 6]);
        // 1 read, 16 initial unit writes, 2 pads, 1 exec, 1 write
        assert_eq!(r.shuffle_cycles, 1 + 16 + 2 + 1 + 1);
    }

    #[test]
    fn unchanged_units_are_not_reprogrammed() {
        let mut prog = Vec::new();
        let mut st = ShuffleState::default();
        let l = BufferLayout::default();
        let slots: Vec<Slot> = (0..8).map(Slot::Elem).collect();
        emit_gather(&mut prog, &mut st, &l, 16, 10, &slots).unwrap();
        let n_ctrl = |p: &[Instruction]| {
            p.iter()
                .filter(|i| matches!(i, Instruction::CtrlShuffling { .. }))
                .count()
        };
        // Second word reuses the identity selection of the first.
        assert_eq!(n_ctrl(&prog), 16);
    }

    #[test]
    fn long_gathers_drain_in_batches() {
        let n = 70 * 4;
        let src: Vec<i64> = (0..n as i64).map(|i| i % 1000).collect();
        let slots: Vec<Slot> = (0..n).map(Slot::Elem).collect();
        let (out, _) = run(16, &src, &slots, 200);
        assert_eq!(out, src);
    }

    #[test]
    fn overlap_is_rejected() {
        let mut prog = Vec::new();
        let e = emit_gather(
            &mut prog,
            &mut ShuffleState::default(),
            &BufferLayout::default(),
            16,
            0,
            &[Slot::Elem(1)],
        );
        assert!(e.is_err());
    }
}
