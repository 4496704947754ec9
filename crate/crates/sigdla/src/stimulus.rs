//! Seeded random inputs sized so that a workload cannot overflow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigdla_core::engine::Tensors;
use sigdla_core::mac_array::Width;
use sigdla_core::mapper::{ConvLayer, TensorPlan, WorkloadKind};
use sigdla_core::Workload;

fn ceil_log2(v: u64) -> u32 {
    64 - v.saturating_sub(1).leading_zeros()
}

/// Largest input magnitude keeping `gain * a` within the 32-bit
/// accumulator and `gain * a >> shift` within `out_bits`.
fn amplitude(a: Width, gain: u64, shift: u32, out_bits: u32) -> i64 {
    let room = (out_bits - 1 + shift).min(31).saturating_sub(ceil_log2(gain.max(1)));
    a.max_value().min((1i64 << room.min(62)) - 1).max(1)
}

fn conv_weight_bound(l: &ConvLayer, w: Width) -> i64 {
    if l.weights.is_empty() {
        w.max_value()
    } else {
        l.weights.iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}

/// Magnitude bound for the signal input `x` of `w`.
pub fn input_amplitude(w: &Workload) -> i64 {
    let cfg = w.bitwidth;
    let a = cfg.a_bits;
    match &w.kind {
        WorkloadKind::Fft { .. } => (1i64 << (a.bits() - 2)) - 1,
        WorkloadKind::Fir {
            taps, shift, out_bits, ..
        } => {
            let gain: u64 = taps.iter().map(|t| t.unsigned_abs()).sum();
            amplitude(a, gain, *shift, *out_bits)
        }
        WorkloadKind::Dct2d { input_bits, .. } => {
            let bits = input_bits.unwrap_or(a.bits().min(30 - cfg.w_bits.bits()));
            (1i64 << (bits - 1)) - 1
        }
        WorkloadKind::Dwt {
            levels, lo, hi, shift, ..
        } => {
            let gain = lo
                .iter()
                .map(|t| t.unsigned_abs())
                .sum::<u64>()
                .max(hi.iter().map(|t| t.unsigned_abs()).sum());
            // Per-level growth in bits; the worst level dominates.
            let growth = ceil_log2(gain.max(1)).saturating_sub(*shift);
            let room = (a.bits() - 1).saturating_sub(growth * *levels as u32);
            ((1i64 << room) - 1).max(1)
        }
        WorkloadKind::ConvLayer(l) => {
            let gain = (l.k_len() as u64) * conv_weight_bound(l, cfg.w_bits) as u64;
            amplitude(a, gain, l.shift, l.out_bits)
        }
        WorkloadKind::Pipeline { stages, .. } => stages.first().map(input_amplitude).unwrap_or(1),
        WorkloadKind::Network(_) => 1,
    }
}

/// Random values for every input tensor of `plan`.
pub fn random_inputs(w: &Workload, plan: &TensorPlan, seed: u64) -> Tensors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = input_amplitude(w);
    plan.inputs()
        .map(|t| {
            let lim = if t.name == "x" { amp } else { (1i64 << (t.bits - 1)) - 1 };
            let v = (0..t.len).map(|_| rng.gen_range(-lim..=lim)).collect();
            (t.name.clone(), v)
        })
        .collect()
}
