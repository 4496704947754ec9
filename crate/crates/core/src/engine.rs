//! Instruction-driven simulator and cycle accounting.
//!
//! Cost model, per retired instruction:
//!
//! | instruction      | cycles                           | counter  |
//! |------------------|----------------------------------|----------|
//! | `rd-buf`/`wr-buf`| 1 per word                       | shuffle  |
//! | `shuffle-exec`   | 1 per output word                | shuffle  |
//! | `ctrl-shuffling` | 1                                | shuffle  |
//! | `ctrl-padding`   | 1                                | shuffle  |
//! | `ctrl-bitwidth`  | 1                                | compute  |
//! | `conv-exec`      | 1 per array step                 | compute  |
//! | `load`/`store`   | DMA setup + bytes / bytes-per-cycle | dma   |
//! | `halt`           | 1                                | compute  |
//!
//! In the sequential schedule `total = compute + shuffle + dma + stall`
//! with `stall == 0`. With DMA overlap enabled the DMA channel runs
//! asynchronously: the issuing instruction does not wait, later
//! instructions whose on-chip footprint intersects an in-flight transfer
//! stall until it lands, a second DMA waits for the channel, and `halt`
//! drains the channel. Then `total = compute + shuffle + stall`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

use crate::fabric::{self, BcifRegisterFile, FabricError, PaddingConfig, ShuffleArrayConfig, ShuffleUnitConfig};
use crate::fixed::{fits_signed, shift_round_even};
use crate::isa::{ConvExec, Instruction, IsaError, Program, TileTransfer};
use crate::mac_array::{ArrayState, BitwidthConfig, MacError, NUM_PES};
use crate::mapper::{Role, TensorPlan, Workload};
use crate::memory::{self, BufferLayout, Direction, DmaDescriptor, DmaTiming, MemError, OffChipMemory, OnChipBuffer};

/// Named element vectors exchanged with a run.
pub type Tensors = BTreeMap<String, Vec<i64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MachineConfig {
    pub layout: BufferLayout,
    pub dma: DmaTiming,
    /// Minimum off-chip capacity; a plan may request more.
    pub offchip_bytes: usize,
    pub overlap_dma: bool,
    pub cycle_budget: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            layout: BufferLayout::default(),
            dma: DmaTiming::default(),
            offchip_bytes: 1 << 20,
            overlap_dma: false,
            cycle_budget: 1_000_000_000,
        }
    }
}

impl MachineConfig {
    pub fn unlimited_bandwidth() -> Self {
        let mut c = Self::default();
        c.dma.bandwidth_mbps = None;
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CycleReport {
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub shuffle_cycles: u64,
    pub dma_cycles: u64,
    pub stall_cycles: u64,
    pub mac_ops: u64,
    pub dma_bytes: u64,
    pub inter_stage_dma_bytes: u64,
    pub instructions: u64,
}

impl CycleReport {
    /// Column order used by tabular exports.
    pub const FIELDS: [&'static str; 9] = [
        "total_cycles",
        "compute_cycles",
        "shuffle_cycles",
        "dma_cycles",
        "stall_cycles",
        "mac_ops",
        "dma_bytes",
        "inter_stage_dma_bytes",
        "instructions",
    ];

    pub fn values(&self) -> [u64; 9] {
        [
            self.total_cycles,
            self.compute_cycles,
            self.shuffle_cycles,
            self.dma_cycles,
            self.stall_cycles,
            self.mac_ops,
            self.dma_bytes,
            self.inter_stage_dma_bytes,
            self.instructions,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Fault {
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Memory(#[from] MemError),
    #[error(transparent)]
    Invalid(#[from] IsaError),
    #[error("output {value} does not fit {bits} bits")]
    OutputOverflow { value: i64, bits: u32 },
    #[error("cycle budget of {0} exceeded")]
    CycleBudget(u64),
    #[error("program ended without halt")]
    MissingHalt,
    #[error("input tensor `{0}` not supplied")]
    MissingInput(String),
    #[error("input tensor `{name}` has {got} elements, expected {expected}")]
    InputLength { name: String, expected: usize, got: usize },
    #[error("input tensor `{name}` element {value} does not fit {bits} bits")]
    InputRange { name: String, value: i64, bits: u32 },
}

/// A fault together with the index of the instruction that raised it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("instruction {pc}: {fault}")]
pub struct EngineError {
    pub pc: usize,
    pub fault: Fault,
}

#[derive(Debug, Clone)]
struct InFlight {
    words: Range<usize>,
    done_at: u64,
}

/// Complete machine state.
#[derive(Debug, Clone)]
pub struct Machine {
    config: MachineConfig,
    pub onchip: OnChipBuffer,
    pub offchip: OffChipMemory,
    array: ArrayState,
    bcif: BcifRegisterFile,
    shuffle: ShuffleArrayConfig,
    padding: PaddingConfig,
    bitwidth: BitwidthConfig,
    pc: usize,
    halted: bool,
    report: CycleReport,
    scratch: Vec<Range<usize>>,
    in_flight: Vec<InFlight>,
    dma_free_at: u64,
}

impl Machine {
    pub fn new(config: MachineConfig) -> Self {
        let bitwidth = BitwidthConfig::default();
        Machine {
            config,
            onchip: OnChipBuffer::new(config.layout),
            offchip: OffChipMemory::new(config.offchip_bytes),
            array: ArrayState::new(),
            bcif: BcifRegisterFile::default(),
            shuffle: ShuffleArrayConfig::default(),
            padding: PaddingConfig::new(bitwidth.a_bits),
            bitwidth,
            pc: 0,
            halted: false,
            report: CycleReport::default(),
            scratch: Vec::new(),
            in_flight: Vec::new(),
            dma_free_at: 0,
        }
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn pc(&self) -> usize {
        self.pc
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn report(&self) -> &CycleReport {
        &self.report
    }

    pub fn bitwidth(&self) -> BitwidthConfig {
        self.bitwidth
    }

    pub fn bcif(&self) -> &BcifRegisterFile {
        &self.bcif
    }

    /// Off-chip byte ranges whose DMA traffic counts as inter-stage.
    pub fn mark_scratch(&mut self, bytes: Range<usize>) {
        self.scratch.push(bytes);
    }

    /// Execute one instruction.
    pub fn step(&mut self, inst: &Instruction) -> Result<(), EngineError> {
        let pc = self.pc;
        self.exec(inst).map_err(|fault| EngineError { pc, fault })?;
        self.pc += 1;
        self.report.instructions += 1;
        if self.report.total_cycles > self.config.cycle_budget {
            return Err(EngineError {
                pc,
                fault: Fault::CycleBudget(self.config.cycle_budget),
            });
        }
        Ok(())
    }

    /// Execute from the current pc until `halt`.
    pub fn run_program(&mut self, program: &Program) -> Result<(), EngineError> {
        while !self.halted {
            let inst = program.instructions.get(self.pc).ok_or(EngineError {
                pc: self.pc,
                fault: Fault::MissingHalt,
            })?;
            self.step(inst)?;
        }
        Ok(())
    }

    fn charge_compute(&mut self, n: u64) {
        self.report.compute_cycles += n;
        self.report.total_cycles += n;
    }

    fn charge_shuffle(&mut self, n: u64) {
        self.report.shuffle_cycles += n;
        self.report.total_cycles += n;
    }

    fn stall_until(&mut self, t: u64) {
        if t > self.report.total_cycles {
            self.report.stall_cycles += t - self.report.total_cycles;
            self.report.total_cycles = t;
        }
    }

    /// Wait for in-flight transfers that touch any of `footprint`.
    fn resolve_hazards(&mut self, footprint: &[Range<usize>]) {
        let now = self.report.total_cycles;
        let wait = self
            .in_flight
            .iter()
            .filter(|f| f.done_at > now && footprint.iter().any(|r| r.start < f.words.end && f.words.start < r.end))
            .map(|f| f.done_at)
            .max();
        if let Some(t) = wait {
            self.stall_until(t);
        }
        let now = self.report.total_cycles;
        self.in_flight.retain(|f| f.done_at > now);
    }

    fn buf_range(&self, bank_start: u32, bank_offset: u32, len: u32) -> Result<Range<usize>, MemError> {
        let start = self.config.layout.linear(bank_start, bank_offset)?;
        Ok(start..start + len as usize)
    }

    fn exec(&mut self, inst: &Instruction) -> Result<(), Fault> {
        inst.validate()?;
        match *inst {
            Instruction::Halt => {
                if self.config.overlap_dma {
                    let t = self.dma_free_at;
                    self.stall_until(t);
                    self.in_flight.clear();
                }
                self.charge_compute(1);
                self.halted = true;
            }
            Instruction::RdBuf {
                bank_start,
                bank_offset,
                length,
            } => {
                if self.config.overlap_dma {
                    let r = self.buf_range(bank_start, bank_offset, length)?;
                    self.resolve_hazards(&[r]);
                }
                self.bcif.read = fabric::BufDescriptor {
                    bank_start,
                    bank_offset,
                    length,
                };
                let n = fabric::bcif_read(&self.onchip, &mut self.bcif)?;
                self.charge_shuffle(n as u64);
            }
            Instruction::WrBuf {
                bank_start,
                bank_offset,
                length,
            } => {
                if self.config.overlap_dma {
                    let r = self.buf_range(bank_start, bank_offset, length)?;
                    self.resolve_hazards(&[r]);
                }
                self.bcif.write = fabric::BufDescriptor {
                    bank_start,
                    bank_offset,
                    length,
                };
                let n = fabric::bcif_write(&mut self.onchip, &self.bcif)?;
                self.charge_shuffle(n as u64);
            }
            Instruction::CtrlBitwidth { a_bits, w_bits } => {
                self.bitwidth = BitwidthConfig::new(a_bits, w_bits);
                self.padding = PaddingConfig::new(a_bits);
                self.charge_compute(1);
            }
            Instruction::CtrlShuffling {
                unit,
                sel,
                split,
                finish,
            } => {
                self.shuffle
                    .configure(unit, ShuffleUnitConfig::new(sel, split)?, finish)?;
                self.charge_shuffle(1);
            }
            Instruction::CtrlPadding { position, value } => {
                self.padding.set(position as u32, value as u32)?;
                self.charge_shuffle(1);
            }
            Instruction::ShuffleExec {
                src_base,
                dst_base,
                word_count,
            } => {
                for j in 0..word_count as usize {
                    let window = self.bcif.window(src_base as usize + j);
                    let w = fabric::shuffle_step(&window, &self.shuffle)?;
                    self.bcif
                        .set_output(dst_base as usize + j, fabric::pad(w, &self.padding))?;
                }
                self.padding.clear();
                self.bcif.clear_staging();
                self.charge_shuffle(word_count as u64);
            }
            Instruction::LoadTile(t) => self.dma(t, Direction::Load)?,
            Instruction::StoreTile(t) => self.dma(t, Direction::Store)?,
            Instruction::ConvExec(c) => self.conv(&c)?,
        }
        Ok(())
    }

    fn dma(&mut self, t: TileTransfer, direction: Direction) -> Result<(), Fault> {
        let d = DmaDescriptor {
            direction,
            dram_addr: t.dram_addr,
            bank_start: t.bank_start,
            bank_offset: t.bank_offset,
            length_bytes: t.length_bytes,
        };
        let (start, words) = d.onchip_range(&self.config.layout)?;
        if self.config.overlap_dma {
            self.resolve_hazards(core::slice::from_ref(&(start..start + words)));
            let t = self.dma_free_at;
            self.stall_until(t);
        }
        let cycles = memory::dma_transfer(&d, &mut self.onchip, &mut self.offchip, &self.config.dma)?;
        let bytes = t.length_bytes as u64;
        self.report.dma_cycles += cycles;
        self.report.dma_bytes += bytes;
        let dram = t.dram_addr as usize..t.dram_addr as usize + t.length_bytes as usize;
        if bytes > 0 && self.scratch.iter().any(|s| s.start < dram.end && dram.start < s.end) {
            self.report.inter_stage_dma_bytes += bytes;
        }
        if self.config.overlap_dma {
            let done_at = self.report.total_cycles + cycles;
            self.dma_free_at = done_at;
            self.in_flight.push(InFlight {
                words: start..start + words,
                done_at,
            });
        } else {
            self.report.total_cycles += cycles;
        }
        Ok(())
    }

    fn conv_footprint(&self, c: &ConvExec) -> Vec<Range<usize>> {
        if c.out_rows == 0 || c.out_cols == 0 {
            return Vec::new();
        }
        let words = |first: u64, last: u64, bits: u32| {
            (first * bits as u64 / 64) as usize..(last * bits as u64 / 64) as usize + 1
        };
        let (r1, c1) = (c.out_rows - 1, c.out_cols - 1);
        let mut v = vec![words(c.out_index(0, 0), c.out_index(r1, c1), c.out_bits.bits())];
        if c.k_len > 0 {
            let a = self.bitwidth.a_bits.bits();
            let w = self.bitwidth.w_bits.bits();
            v.push(words(c.fmap_index(0, 0), c.fmap_index(r1, c.k_len - 1), a));
            v.push(words(c.weight_index(0, 0), c.weight_index(c1, c.k_len - 1), w));
        }
        v
    }

    fn conv(&mut self, c: &ConvExec) -> Result<(), Fault> {
        if self.config.overlap_dma {
            let fp = self.conv_footprint(c);
            self.resolve_hazards(&fp);
        }
        let cfg = self.bitwidth;
        let lanes = cfg.lanes_per_pe();
        let a_bits = cfg.a_bits.bits();
        let w_bits = cfg.w_bits.bits();
        let out_bits = c.out_bits.bits();
        let mut steps = 0u64;
        let mut acts = vec![0i64; lanes];
        let mut weights = [[0i64; 16]; NUM_PES];
        for r in 0..c.out_rows {
            for col0 in (0..c.out_cols).step_by(NUM_PES) {
                let mut acc = [0i32; NUM_PES];
                for k0 in (0..c.k_len).step_by(lanes) {
                    for (l, a) in acts.iter_mut().enumerate() {
                        let k = k0 + l as u32;
                        *a = if k < c.k_len {
                            self.onchip.element(c.fmap_index(r, k) as usize, a_bits)?
                        } else {
                            0
                        };
                    }
                    for (p, ws) in weights.iter_mut().enumerate() {
                        let col = col0 + p as u32;
                        for (l, w) in ws[..lanes].iter_mut().enumerate() {
                            let k = k0 + l as u32;
                            *w = if col < c.out_cols && k < c.k_len {
                                self.onchip.element(c.weight_index(col, k) as usize, w_bits)?
                            } else {
                                0
                            };
                        }
                    }
                    let sets: [&[i64]; NUM_PES] = core::array::from_fn(|p| &weights[p][..lanes]);
                    let sums = self.array.step(&acts, &sets, cfg)?;
                    for (a, s) in acc.iter_mut().zip(sums) {
                        *a = a.checked_add(s).ok_or(MacError::AccumulatorOverflow)?;
                    }
                    steps += 1;
                }
                for (p, &a) in acc.iter().enumerate() {
                    let col = col0 + p as u32;
                    if col >= c.out_cols {
                        break;
                    }
                    let mut v = shift_round_even(a as i64, c.shift as u32);
                    if c.relu {
                        v = v.max(0);
                    }
                    if !fits_signed(v, out_bits) {
                        return Err(Fault::OutputOverflow {
                            value: v,
                            bits: out_bits,
                        });
                    }
                    self.onchip.set_element(c.out_index(r, col) as usize, out_bits, v)?;
                }
            }
        }
        self.report.mac_ops += c.mac_count();
        self.charge_compute(steps);
        Ok(())
    }

    /// Write a tensor image into off-chip memory.
    pub fn write_tensor(
        &mut self,
        dram_addr: usize,
        bits: u32,
        elem_offset: usize,
        values: &[i64],
    ) -> Result<(), MemError> {
        let bytes = crate::mapper::pack_elements(bits, elem_offset, values);
        self.offchip.write_bytes(dram_addr, &bytes)
    }

    /// Read `len` elements of a tensor image from off-chip memory.
    pub fn read_tensor(
        &self,
        dram_addr: usize,
        bits: u32,
        elem_offset: usize,
        len: usize,
    ) -> Result<Vec<i64>, MemError> {
        let bytes = self
            .offchip
            .bytes(dram_addr, crate::mapper::packed_bytes(bits, elem_offset + len))?;
        Ok(crate::mapper::unpack_elements(bytes, bits, elem_offset, len))
    }
}

/// Load `plan` and `inputs`, run `program` to completion and collect the
/// plan's output tensors.
pub fn run(
    program: &Program,
    plan: &TensorPlan,
    inputs: &Tensors,
    config: &MachineConfig,
) -> Result<(Tensors, CycleReport), EngineError> {
    let setup = |fault| EngineError { pc: 0, fault };
    let mut cfg = *config;
    cfg.offchip_bytes = cfg.offchip_bytes.max(plan.offchip_bytes());
    let mut m = Machine::new(cfg);
    for t in &plan.tensors {
        let values: &[i64] = match t.role {
            Role::Constant => &t.data,
            Role::Input => {
                let v = inputs
                    .get(&t.name)
                    .ok_or_else(|| setup(Fault::MissingInput(t.name.clone())))?;
                if v.len() != t.len {
                    return Err(setup(Fault::InputLength {
                        name: t.name.clone(),
                        expected: t.len,
                        got: v.len(),
                    }));
                }
                if let Some(&bad) = v.iter().find(|&&x| !fits_signed(x, t.bits)) {
                    return Err(setup(Fault::InputRange {
                        name: t.name.clone(),
                        value: bad,
                        bits: t.bits,
                    }));
                }
                v
            }
            Role::Scratch => {
                m.mark_scratch(t.dram_addr as usize..t.dram_addr as usize + t.byte_len());
                continue;
            }
            Role::Output => continue,
        };
        m.write_tensor(t.dram_addr as usize, t.bits, t.elem_offset, values)
            .map_err(|e| setup(e.into()))?;
    }
    m.run_program(program)?;
    let mut outputs = Tensors::new();
    for t in plan.tensors.iter().filter(|t| t.role == Role::Output) {
        let v = m
            .read_tensor(t.dram_addr as usize, t.bits, t.elem_offset, t.len)
            .map_err(|e| EngineError {
                pc: m.pc,
                fault: e.into(),
            })?;
        outputs.insert(t.name.clone(), v);
    }
    Ok((outputs, m.report))
}

/// All-zero inputs for every `Input` tensor of `plan`.
pub fn zero_inputs(plan: &TensorPlan) -> Tensors {
    plan.tensors
        .iter()
        .filter(|t| t.role == Role::Input)
        .map(|t| (t.name.clone(), vec![0; t.len]))
        .collect()
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error(transparent)]
    Map(#[from] crate::mapper::MapError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// `total_cycles(cfg_b) / total_cycles(cfg_a)` for `workload` mapped under
/// each configuration and run on zero inputs.
pub fn compare_configs(
    workload: &Workload,
    cfg_a: BitwidthConfig,
    cfg_b: BitwidthConfig,
    machine: &MachineConfig,
) -> Result<f64, CompareError> {
    let cycles = |cfg| -> Result<u64, CompareError> {
        let (program, plan) = workload.with_bitwidth(cfg).map()?;
        let (_, report) = run(&program, &plan, &zero_inputs(&plan), machine)?;
        Ok(report.total_cycles)
    };
    let a = cycles(cfg_a)?;
    let b = if cfg_a == cfg_b { a } else { cycles(cfg_b)? };
    Ok(b as f64 / a as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Word64;
    use crate::isa::assemble;
    use crate::mac_array::Width;

    fn machine() -> Machine {
        Machine::new(MachineConfig::default())
    }

    #[test]
    fn halt_costs_one_cycle() {
        let mut m = machine();
        m.run_program(&assemble("halt").unwrap()).unwrap();
        assert!(m.is_halted());
        assert_eq!(m.report().total_cycles, 1);
        assert_eq!(m.report().compute_cycles, 1);
    }

    #[test]
    fn missing_halt_is_a_fault() {
        let mut m = machine();
        let e = m
            .run_program(&assemble("ctrl-bitwidth a-bits=8 w-bits=8").unwrap())
            .unwrap_err();
        assert_eq!(e.fault, Fault::MissingHalt);
        assert_eq!(e.pc, 1);
    }

    #[test]
    fn shuffle_exec_over_four_words() {
        let mut src = String::from("rd-buf bank-start=0 bank-offset=0 length=4\n");
        for u in 0..16 {
            src += &alloc::format!("ctrl-shuffling unit={u} sel=0 split={u} finish={}\n", (u == 15) as u8);
        }
        src += "shuffle-exec src=0 dst=0 count=4\nwr-buf bank-start=1 bank-offset=0 length=4\nhalt";
        let mut m = machine();
        for i in 0..4 {
            m.onchip.set_word(i, Word64(0x1111 * (i as u64 + 1))).unwrap();
        }
        m.run_program(&assemble(&src).unwrap()).unwrap();
        let r = m.report();
        // 4 read + 16 config + 4 shuffle + 4 write
        assert_eq!(r.shuffle_cycles, 4 + 16 + 4 + 4);
        for i in 0..4 {
            assert_eq!(m.onchip.word(1024 + i).unwrap(), m.onchip.word(i).unwrap());
        }
    }

    #[test]
    fn unfinished_shuffle_config_faults() {
        let src = "ctrl-shuffling unit=0 sel=0 split=0 finish=1\nshuffle-exec src=0 dst=0 count=1\nhalt";
        let e = machine().run_program(&assemble(src).unwrap()).unwrap_err();
        assert_eq!(e.pc, 1);
        assert!(matches!(e.fault, Fault::Fabric(FabricError::Unconfigured(1))));
    }

    #[test]
    fn conv_step_count_and_values() {
        // 2x3 output, k_len 20 at 8x8 (4 lanes): 2 rows * 1 col group * 5 chunks
        let mut m = machine();
        m.step(&Instruction::CtrlBitwidth {
            a_bits: Width::W8,
            w_bits: Width::W8,
        })
        .unwrap();
        for k in 0..40 {
            m.onchip.set_element(k, 8, (k as i64 % 7) - 3).unwrap();
        }
        for k in 0..60 {
            m.onchip.set_element(64 + k, 8, (k as i64 % 5) - 2).unwrap();
        }
        let c = ConvExec::gemm(0, 64, 64, 2, 3, 20);
        m.step(&Instruction::ConvExec(c)).unwrap();
        assert_eq!(m.report().compute_cycles, 1 + 10);
        assert_eq!(m.report().mac_ops, 120);
        for r in 0..2 {
            for col in 0..3 {
                let want: i64 = (0..20).map(|k| ((r * 20 + k) % 7 - 3) * ((col * 20 + k) % 5 - 2)).sum();
                let got = m
                    .onchip
                    .element(c.out_index(r as u32, col as u32) as usize, 32)
                    .unwrap();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn conv_output_overflow_faults() {
        let mut m = machine();
        m.onchip.set_element(0, 8, 100).unwrap();
        m.onchip.set_element(8, 8, 100).unwrap();
        let mut c = ConvExec::gemm(0, 8, 4, 1, 1, 1);
        c.out_bits = crate::isa::OutBits::B8;
        let e = m.step(&Instruction::ConvExec(c)).unwrap_err();
        assert_eq!(e.fault, Fault::OutputOverflow { value: 10000, bits: 8 });
    }

    #[test]
    fn dma_sequential_and_overlapped() {
        let prog = assemble(
            "load-tile dram-addr=0 bank-start=0 bank-offset=0 length-bytes=1600\n\
             ctrl-bitwidth a-bits=8 w-bits=8\n\
             rd-buf bank-start=2 bank-offset=0 length=1\n\
             rd-buf bank-start=0 bank-offset=0 length=1\n\
             halt",
        )
        .unwrap();
        let mut seq = machine();
        seq.run_program(&prog).unwrap();
        let r = seq.report();
        assert_eq!(r.dma_cycles, 120);
        assert_eq!(
            r.total_cycles,
            r.compute_cycles + r.shuffle_cycles + r.dma_cycles + r.stall_cycles
        );
        assert_eq!(r.total_cycles, 120 + 1 + 2 + 1);

        let cfg = MachineConfig {
            overlap_dma: true,
            ..MachineConfig::default()
        };
        let mut ov = Machine::new(cfg);
        ov.run_program(&prog).unwrap();
        let o = ov.report();
        // Independent work hides under the transfer; the dependent read stalls.
        assert_eq!(o.total_cycles, 120 + 1 + 1);
        assert_eq!(o.stall_cycles, 120 - 2);
        assert_eq!(o.total_cycles, o.compute_cycles + o.shuffle_cycles + o.stall_cycles);
    }

    #[test]
    fn cycle_budget_is_enforced() {
        let cfg = MachineConfig {
            cycle_budget: 50,
            ..MachineConfig::default()
        };
        let prog = assemble("load-tile dram-addr=0 bank-start=0 bank-offset=0 length-bytes=1600\nhalt").unwrap();
        let e = Machine::new(cfg).run_program(&prog).unwrap_err();
        assert_eq!(e.fault, Fault::CycleBudget(50));
    }
}
