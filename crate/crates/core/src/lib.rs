//! Cycle-approximate model of a unified signal-processing / deep-learning
//! accelerator.
//!
//! The machine is a conventional convolution engine (eight precision-scalable
//! PEs of sixteen 4-bit multipliers each) with a programmable data-shuffling
//! fabric sitting between the on-chip buffer and the computing array. The
//! crate contains:
//!
//! - [`isa`]: instruction set, text assembler/disassembler and binary codec.
//! - [`mac_array`]: the fused 4/8/16-bit multiplier array.
//! - [`fabric`]: buffer controller interface, shuffling units and padding unit.
//! - [`memory`]: banked on-chip buffer, off-chip memory and DMA cost model.
//! - [`engine`]: the instruction-driven simulator and its cycle counters.
//! - [`mapper`]: lowering of FFT/FIR/DCT/DWT/convolution onto the machine.
//! - [`reference`]: naive scalar oracles, independent of the simulator path.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod engine;
pub mod fabric;
pub mod isa;
pub mod mac_array;
pub mod mapper;
pub mod memory;
pub mod reference;

mod fixed;

pub use engine::{CycleReport, Machine, MachineConfig};
pub use isa::{Instruction, Program};
pub use mac_array::{BitwidthConfig, Width};
pub use mapper::{TensorPlan, Workload};
pub use memory::Word64;
