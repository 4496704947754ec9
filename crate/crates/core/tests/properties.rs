//! Property tests over the instruction codec, the shuffle fabric, the
//! memory model and the engine.

use proptest::prelude::*;
use sigdla_core::engine::{run, MachineConfig, Tensors};
use sigdla_core::fabric::{pad, shuffle_step, PaddingConfig, ShuffleArrayConfig, Word64, WINDOW};
use sigdla_core::isa::{assemble, disassemble, ConvExec, OutBits, TileTransfer};
use sigdla_core::mac_array::{compose_mul, Width};
use sigdla_core::memory::{
    dma_transfer, BufferLayout, Direction, DmaDescriptor, DmaTiming, OffChipMemory, OnChipBuffer,
};
use sigdla_core::reference;
use sigdla_core::{BitwidthConfig, Instruction, Program, Workload};

fn width() -> impl Strategy<Value = Width> {
    prop_oneof![Just(Width::W4), Just(Width::W8), Just(Width::W16)]
}

fn out_bits() -> impl Strategy<Value = OutBits> {
    prop_oneof![
        Just(OutBits::B4),
        Just(OutBits::B8),
        Just(OutBits::B16),
        Just(OutBits::B32)
    ]
}

fn tile() -> impl Strategy<Value = TileTransfer> {
    (any::<u32>(), 0u32..=63, 0u32..=16383, any::<u32>()).prop_map(|(dram_addr, bank_start, bank_offset, len)| {
        TileTransfer {
            dram_addr,
            bank_start,
            bank_offset,
            length_bytes: len & !7,
        }
    })
}

fn conv_exec() -> impl Strategy<Value = ConvExec> {
    (
        [any::<u32>(); 6],
        (any::<u32>(), 1u32.., any::<u32>(), any::<u32>(), any::<u32>()),
        (0u8..=31, out_bits(), any::<bool>()),
    )
        .prop_map(
            |(a, (row_stride, seg_len, seg_stride, out_row_stride, out_col_stride), (shift, out_bits, relu))| {
                ConvExec {
                    fmap_base: a[0],
                    weight_base: a[1],
                    out_base: a[2],
                    out_rows: a[3],
                    out_cols: a[4],
                    k_len: a[5],
                    fmap_row_stride: row_stride,
                    fmap_seg_len: seg_len,
                    fmap_seg_stride: seg_stride,
                    out_row_stride,
                    out_col_stride,
                    shift,
                    out_bits,
                    relu,
                }
            },
        )
}

fn instruction() -> impl Strategy<Value = Instruction> {
    let buf = (0u32..=63, 0u32..=16383, 0u32..=64);
    prop_oneof![
        Just(Instruction::Halt),
        buf.clone()
            .prop_map(|(bank_start, bank_offset, length)| Instruction::RdBuf {
                bank_start,
                bank_offset,
                length
            }),
        buf.prop_map(|(bank_start, bank_offset, length)| Instruction::WrBuf {
            bank_start,
            bank_offset,
            length
        }),
        (width(), width()).prop_map(|(a_bits, w_bits)| Instruction::CtrlBitwidth { a_bits, w_bits }),
        (0u8..16, 0u8..16, 0u8..16, any::<bool>()).prop_map(|(unit, sel, split, finish)| Instruction::CtrlShuffling {
            unit,
            sel,
            split,
            finish
        }),
        (0u8..16, any::<u16>()).prop_map(|(position, value)| Instruction::CtrlPadding { position, value }),
        tile().prop_map(Instruction::LoadTile),
        tile().prop_map(Instruction::StoreTile),
        conv_exec().prop_map(Instruction::ConvExec),
        (0u8..64, 0u8..=64)
            .prop_flat_map(|(src, count)| (Just(src), 0..=64 - count, Just(count)))
            .prop_map(|(src_base, dst_base, word_count)| Instruction::ShuffleExec {
                src_base,
                dst_base,
                word_count
            }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn binary_round_trip(i in instruction()) {
        let words = i.encode().unwrap();
        prop_assert_eq!(words.len(), i.encoded_len());
        prop_assert_eq!(Instruction::decode(&words).unwrap(), (i, words.len()));
    }

    /// Shift-and-mask oracle: output nibble `i` is bits
    /// `4*split..4*split+4` of word `sel`.
    #[test]
    fn shuffle_matches_shift_and_mask(inputs in [any::<u64>(); WINDOW], sel in prop::array::uniform16(0u8..16), split in prop::array::uniform16(0u8..16)) {
        let words = inputs.map(Word64);
        let cfg = ShuffleArrayConfig::from_fn(|i| (sel[i], split[i])).unwrap();
        let got = shuffle_step(&words, &cfg).unwrap().0;
        let want = (0..16).fold(0u64, |acc, i| {
            acc | (((inputs[sel[i] as usize] >> (4 * split[i] as u32)) & 0xF) << (4 * i))
        });
        prop_assert_eq!(got, want);
    }

    #[test]
    fn pad_preserves_unmasked_bits(word in any::<u64>(), w in width(), mask in any::<u16>(), values in [any::<u16>(); 16]) {
        let bits = w.bits();
        let mut cfg = PaddingConfig::new(w);
        let lim = (1u32 << bits) - 1;
        let mut keep = u64::MAX;
        for (slot, &v) in values.iter().enumerate().take(cfg.slot_count()) {
            if mask >> slot & 1 == 1 {
                cfg.set(slot as u32, v as u32 & lim).unwrap();
                keep &= !((lim as u64) << (slot as u32 * bits));
            }
        }
        let out = pad(Word64(word), &cfg).0;
        prop_assert_eq!(out & keep, word & keep);
        for (slot, v) in cfg.masked() {
            prop_assert_eq!((out >> (slot as u32 * bits)) & lim as u64, v as u64);
        }
    }

    #[test]
    fn fused_multiply_matches_full_width(a in any::<i64>(), w in any::<i64>(), aw in width(), ww in width()) {
        let cfg = BitwidthConfig::new(aw, ww);
        let (a, w) = (a.rem_euclid(1 << aw.bits()) + aw.min_value(), w.rem_euclid(1 << ww.bits()) + ww.min_value());
        prop_assert_eq!(compose_mul(a, w, cfg).unwrap(), reference::full_width_mul(a, w, aw.bits(), ww.bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn text_round_trip(insts in prop::collection::vec(instruction(), 1..8)) {
        let p = Program::from(insts);
        let text = disassemble(&p);
        let back = assemble(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(disassemble(&back), text);
    }

    /// A load moves exactly the described words and nothing else.
    #[test]
    fn dma_frame(start in 0usize..18_000, words in 0usize..64, fill in any::<u64>(), dram_word in 0usize..100) {
        let layout = BufferLayout::default();
        prop_assume!(start + words <= layout.total_words());
        let mut on = OnChipBuffer::new(layout);
        let mut off = OffChipMemory::new(8 * 200);
        for i in 0..200 {
            off.write_word(8 * i, Word64(fill ^ i as u64)).unwrap();
        }
        let (bank_start, bank_offset) = layout.split(start);
        let d = DmaDescriptor {
            direction: Direction::Load,
            dram_addr: (8 * dram_word) as u32,
            bank_start,
            bank_offset,
            length_bytes: (8 * words) as u32,
        };
        let timing = DmaTiming::default();
        prop_assert_eq!(dma_transfer(&d, &mut on, &mut off, &timing).unwrap(), timing.cycles(8 * words as u64));
        for i in 0..layout.total_words() {
            let want = if (start..start + words).contains(&i) { fill ^ (dram_word + i - start) as u64 } else { 0 };
            prop_assert_eq!(on.word(i).unwrap().0, want);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Repeated runs agree, the counters add up and every MAC is counted.
    #[test]
    fn fir_run_invariants(taps in prop::collection::vec(-128i64..128, 1..10), extra in 0usize..40, seed in any::<u64>()) {
        let len = taps.len() + extra;
        let cfg = BitwidthConfig::square(Width::W8);
        let x: Vec<i64> = (0..len as u64).map(|i| ((seed.wrapping_mul(i + 1) >> 7) % 256) as i64 - 128).collect();
        let (p, plan) = Workload::fir(taps.clone(), len, cfg).map().unwrap();
        let inputs = Tensors::from([("x".to_string(), x.clone())]);
        let (o1, r1) = run(&p, &plan, &inputs, &MachineConfig::default()).unwrap();
        let (o2, r2) = run(&p, &plan, &inputs, &MachineConfig::default()).unwrap();
        prop_assert_eq!(&o1, &o2);
        prop_assert_eq!(&r1, &r2);
        prop_assert_eq!(r1.total_cycles, r1.compute_cycles + r1.shuffle_cycles + r1.dma_cycles + r1.stall_cycles);
        prop_assert_eq!(r1.mac_ops, (taps.len() * len) as u64);
        prop_assert_eq!(r1.inter_stage_dma_bytes, 0);
        prop_assert_eq!(&o1["y"], &reference::fir(&x, &taps));
    }
}
