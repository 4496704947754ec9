//! Acceptance gate: one PASS/FAIL line per criterion, tolerances pinned
//! below. Runs without the libtest harness so the lines always print.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigdla::manifest::load_json;
use sigdla::oracle::expected;
use sigdla::stimulus::random_inputs;
use sigdla::verify::check_case;
use sigdla_core::engine::{compare_configs, run, Machine, MachineConfig};
use sigdla_core::fabric::{pad, shuffle_step, PaddingConfig, ShuffleArrayConfig, Word64, WINDOW};
use sigdla_core::isa::assemble;
use sigdla_core::mac_array::{compose_mul, Width};
use sigdla_core::mapper::{count_mult_adds, ConvLayer, WorkloadKind};
use sigdla_core::{BitwidthConfig, Workload};

/// Wall-clock limit for the multiplier sweep.
const MUL_TIME_LIMIT: Duration = Duration::from_secs(10);
const MUL_RANDOM_16X16: usize = 1_000_000;
const FABRIC_CASES: usize = 10_000;
/// Relative tolerance on the network multiply-add counts.
const NETWORK_COUNT_TOL: f64 = 0.01;
const TINY_VGGNET_MULT_ADDS: f64 = 1.69e8;
const ULTRANET_MULT_ADDS: f64 = 3.83e6;
const BIT_EXACT_CASES: usize = 1_000;
/// Relative RMS of the 16-bit FFT against `DFT / N`.
const FFT_RMS_TOL: f64 = 2e-3;
const FFT_SEEDS: u64 = 2;
/// Relative RMS of the DCT with 8-bit coefficients.
const DCT_RMS_TOL: f64 = 1e-2;
const DCT_SEEDS: u64 = 4;
const CNN_SPEEDUP: (f64, f64) = (12.0, 16.0);
const DSP_SPEEDUP: (f64, f64) = (3.5, 4.0);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture<T: serde::de::DeserializeOwned>(name: &str) -> T {
    load_json(&fixtures().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const W16: BitwidthConfig = BitwidthConfig::square(Width::W16);
const W8: BitwidthConfig = BitwidthConfig::square(Width::W8);

fn multiplier() -> Outcome {
    let start = Instant::now();
    let mut bad = 0usize;
    let cfg8 = W8;
    for a in -128..=127 {
        for w in -128..=127 {
            bad += usize::from(compose_mul(a, w, cfg8) != Ok(a * w));
        }
    }
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let (lo, hi) = (Width::W16.min_value(), Width::W16.max_value());
    let corners = [(lo, lo), (lo, hi), (hi, lo), (hi, hi)];
    let random = (0..MUL_RANDOM_16X16).map(|_| (r.gen_range(lo..=hi), r.gen_range(lo..=hi)));
    for (a, w) in corners.into_iter().chain(random) {
        bad += usize::from(compose_mul(a, w, W16) != Ok(a * w));
    }
    let t = start.elapsed();
    outcome(
        bad == 0 && t < MUL_TIME_LIMIT,
        format!(
            "65536 8x8 + {} 16x16 cases, {bad} mismatches, {:.2} s",
            MUL_RANDOM_16X16 + 4,
            t.as_secs_f64()
        ),
    )
}

fn fabric() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut shuffle_bad = 0;
    for _ in 0..FABRIC_CASES {
        let inputs: [Word64; WINDOW] = std::array::from_fn(|_| Word64(r.gen()));
        let codes: [(u8, u8); 16] = std::array::from_fn(|_| (r.gen_range(0..16), r.gen_range(0..16)));
        let cfg = ShuffleArrayConfig::from_fn(|i| codes[i]).unwrap();
        let got = shuffle_step(&inputs, &cfg).unwrap().0;
        let want = codes.iter().enumerate().fold(0u64, |acc, (i, &(sel, split))| {
            acc | ((inputs[sel as usize].0 >> (4 * split)) & 0xF) << (4 * i)
        });
        shuffle_bad += usize::from(got != want);
    }
    let mut pad_bad = 0;
    for _ in 0..FABRIC_CASES {
        let width = [Width::W4, Width::W8, Width::W16][r.gen_range(0..3)];
        let bits = width.bits();
        let word: u64 = r.gen();
        let mut cfg = PaddingConfig::new(width);
        let mut mask = 0u64;
        let mut values = 0u64;
        for slot in 0..cfg.slot_count() as u32 {
            if r.gen_bool(0.5) {
                let v = r.gen_range(0..1u32 << bits);
                cfg.set(slot, v).unwrap();
                mask |= ((1u64 << bits) - 1) << (slot * bits);
                values |= (v as u64) << (slot * bits);
            }
        }
        let got = pad(Word64(word), &cfg).0;
        pad_bad += usize::from(got & !mask != word & !mask || got & mask != values);
    }
    let (gather_ok, len) = gather_pad_writeback();
    outcome(
        shuffle_bad == 0 && pad_bad == 0 && gather_ok && len == 7,
        format!(
            "shuffle {shuffle_bad}/{FABRIC_CASES} and pad {pad_bad}/{FABRIC_CASES} mismatches, gather-pad-writeback {}, {len} control instructions",
            if gather_ok { "exact" } else { "wrong" }
        ),
    )
}

/// Four 16-bit segments gathered from four words, low byte padded, written
/// back after the sources.
fn gather_pad_writeback() -> (bool, usize) {
    let program = assemble(&fs::read_to_string(fixtures().join("gather-pad.asm")).unwrap()).unwrap();
    let mut m = Machine::new(MachineConfig::default());
    let src = [
        0x1111_2222_3333_4444u64,
        0x5555_6666_7777_8888,
        0x9999_aaaa_bbbb_cccc,
        0xdddd_eeee_ffff_0123,
    ];
    let layout = m.config().layout;
    for (i, &w) in src.iter().enumerate() {
        m.onchip
            .set_word(layout.linear(0, i as u32).unwrap(), Word64(w))
            .unwrap();
    }
    m.run_program(&program).unwrap();
    let got = m.onchip.word(layout.linear(0, 4).unwrap()).unwrap().0;
    let gathered = (0..4).fold(0u64, |acc, i| acc | (src[i] & (0xFFFF << (16 * i))));
    let want = (gathered & !0xFF) | 0x5a;
    (got == want, program.control_sequence_len())
}

fn counts() -> Outcome {
    let fft = count_mult_adds(&Workload::fft(1024, W16));
    let fir = count_mult_adds(&Workload::fir(vec![1; 80], 256, W16));
    let vgg = count_mult_adds(&fixture("tiny-vggnet.json")) as f64;
    let ultra = count_mult_adds(&fixture("ultranet.json")) as f64;
    let rel = |got: f64, want: f64| (got - want).abs() / want;
    outcome(
        fft == 51_200
            && fir == 20_480
            && rel(vgg, TINY_VGGNET_MULT_ADDS) <= NETWORK_COUNT_TOL
            && rel(ultra, ULTRANET_MULT_ADDS) <= NETWORK_COUNT_TOL,
        format!("FFT-1024 {fft}, FIR 80x256 {fir}, Tiny-VGGNet {vgg:.4e}, UltraNet {ultra:.4e}"),
    )
}

fn random_cfg(r: &mut ChaCha8Rng) -> BitwidthConfig {
    BitwidthConfig::all().nth(r.gen_range(0..9)).unwrap()
}

fn taps(r: &mut ChaCha8Rng, len: usize, w: Width) -> Vec<i64> {
    (0..len).map(|_| r.gen_range(w.min_value()..=w.max_value())).collect()
}

fn ceil_log2(v: u64) -> u32 {
    64 - v.saturating_sub(1).leading_zeros()
}

/// A shift that leaves room for full-scale activations in `out_bits`.
fn feasible_shift(r: &mut ChaCha8Rng, gain: u64, a: Width, out_bits: u32) -> u32 {
    (r.gen_range(0..=4) + (ceil_log2(gain.max(1)) + a.bits()).saturating_sub(out_bits)).min(31)
}

fn random_fir(r: &mut ChaCha8Rng) -> Workload {
    let cfg = random_cfg(r);
    let n = r.gen_range(1..=24);
    let h = taps(r, n, cfg.w_bits);
    let gain = h.iter().map(|t| t.unsigned_abs()).sum();
    let mut w = Workload::fir(h, r.gen_range(n..=160), cfg);
    if let WorkloadKind::Fir { shift, out_bits, .. } = &mut w.kind {
        *out_bits = [16, 32][r.gen_range(0..2)];
        *shift = feasible_shift(r, gain, cfg.a_bits, *out_bits);
    }
    w
}

fn random_conv(r: &mut ChaCha8Rng) -> Workload {
    let cfg = random_cfg(r);
    let k = r.gen_range(1..=3);
    let mut l = ConvLayer::new(
        r.gen_range(k..=k + 6),
        r.gen_range(k..=k + 6),
        r.gen_range(1..=4),
        k,
        r.gen_range(1..=4),
    );
    l.stride = r.gen_range(1..=2);
    l.relu = r.gen_bool(0.5);
    l.out_bits = [8, 16, 32][r.gen_range(0..3)];
    if r.gen_bool(0.5) {
        l.weights = taps(r, l.weight_len(), cfg.w_bits);
    }
    let gain = l.k_len() as u64 * cfg.w_bits.max_value() as u64;
    l.shift = feasible_shift(r, gain, cfg.a_bits, l.out_bits);
    Workload::conv(l, cfg)
}

fn random_dwt(r: &mut ChaCha8Rng) -> Workload {
    let cfg = BitwidthConfig::new(
        [Width::W8, Width::W16][r.gen_range(0..2)],
        [Width::W4, Width::W8][r.gen_range(0..2)],
    );
    let levels = r.gen_range(1..=3);
    let (nl, nh) = (r.gen_range(2..=4), r.gen_range(2..=4));
    let kind = WorkloadKind::Dwt {
        length: (1 << levels) * r.gen_range(1..=16),
        levels,
        lo: taps(r, nl, cfg.w_bits),
        hi: taps(r, nh, cfg.w_bits),
        shift: r.gen_range(cfg.w_bits.bits() - 2..=cfg.w_bits.bits() + 1),
    };
    Workload::new(kind, cfg)
}

/// Bit-exact runs of `cases` random workloads; returns failures.
fn sweep(seed: u64, cases: usize, gen: fn(&mut ChaCha8Rng) -> Workload) -> usize {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let machine = MachineConfig::default();
    (0..cases)
        .filter(|&i| {
            let w = gen(&mut r);
            let ok = (|| {
                let (program, plan) = w.map().ok()?;
                let inputs = random_inputs(&w, &plan, seed * 1_000_003 + i as u64);
                let checks = check_case("", &w, &program, &plan, &inputs, &machine).ok()?;
                Some(checks.iter().all(|c| c.passed))
            })();
            ok != Some(true)
        })
        .count()
}

fn precision() -> Outcome {
    let fir = sweep(10, BIT_EXACT_CASES, random_fir);
    let conv = sweep(11, BIT_EXACT_CASES, random_conv);
    let dwt = sweep(12, BIT_EXACT_CASES, random_dwt);
    let machine = MachineConfig::default();
    let worst = |w: &Workload, seeds: u64| -> (bool, f64) {
        let (program, plan) = w.map().unwrap();
        let mut ok = true;
        let mut rms: f64 = 0.0;
        for s in 0..seeds {
            let checks = check_case("", w, &program, &plan, &random_inputs(w, &plan, s), &machine).unwrap();
            for c in checks {
                if c.name.contains("relative RMS") {
                    rms = rms.max(c.error);
                } else {
                    ok &= c.passed;
                }
            }
        }
        (ok, rms)
    };
    let mut fft_ok = true;
    let mut fft_rms = Vec::new();
    for n in [128, 256, 512, 1024] {
        let (exact, rms) = worst(&Workload::fft(n, W16), FFT_SEEDS);
        fft_ok &= exact && rms <= FFT_RMS_TOL;
        fft_rms.push(format!("{n}:{rms:.2e}"));
    }
    let dct: Workload = fixture("dct.json");
    let (dct_exact, dct_rms) = worst(&dct, DCT_SEEDS);
    outcome(
        fir == 0 && conv == 0 && dwt == 0 && fft_ok && dct_exact && dct_rms <= DCT_RMS_TOL,
        format!(
            "bit-exact failures FIR {fir}, conv {conv}, DWT {dwt} of {BIT_EXACT_CASES}; FFT RMS [{}] (tol {FFT_RMS_TOL:.0e}); DCT {}x{} RMS {dct_rms:.2e} (tol {DCT_RMS_TOL:.0e})",
            fft_rms.join(" "),
            dct.bitwidth.a_bits.bits(),
            dct.bitwidth.w_bits.bits(),
        ),
    )
}

fn speedups() -> Outcome {
    let unlimited = MachineConfig::unlimited_bandwidth();
    let limited = MachineConfig::default();
    let speedup = |w: &Workload, cfg, m: &MachineConfig| compare_configs(w, cfg, W16, m).unwrap();
    let conv: Workload = fixture("conv.json");
    let four = BitwidthConfig::square(Width::W4);
    let (cnn, cnn_lim) = (speedup(&conv, four, &unlimited), speedup(&conv, four, &limited));
    let fir = speedup(&fixture("fir.json"), W8, &unlimited);
    let dct = speedup(&fixture("dct.json"), W8, &unlimited);
    let fft: Vec<f64> = [128, 256, 512, 1024]
        .iter()
        .map(|&n| speedup(&Workload::fft(n, W16), W8, &unlimited))
        .collect();
    let fft_max = fft.iter().copied().fold(0.0, f64::max);
    let within = |s: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&s);
    outcome(
        within(cnn, CNN_SPEEDUP)
            && cnn_lim < cnn
            && within(fir, DSP_SPEEDUP)
            && within(dct, DSP_SPEEDUP)
            && fft_max < fir.min(dct),
        format!(
            "CNN 4x4 {cnn:.3} unlimited, {cnn_lim:.3} at {} MB/s; FIR 8x8 {fir:.3}; DCT 8x8 {dct:.3}; FFT 8x8 max {fft_max:.3}",
            limited.dma.bandwidth_mbps.unwrap()
        ),
    )
}

fn pipeline() -> Outcome {
    let machine = MachineConfig::default();
    let fused: Workload = fixture("pipeline.json");
    let staged: Workload = fixture("pipeline-staged.json");
    let (fp, fplan) = fused.map().unwrap();
    let (sp, splan) = staged.map().unwrap();
    let inputs = random_inputs(&fused, &fplan, 6);
    let (fout, frep) = run(&fp, &fplan, &inputs, &machine).unwrap();
    let (sout, srep) = run(&sp, &splan, &inputs, &machine).unwrap();
    let want = expected(&fused, &fplan, &inputs).unwrap();
    let matches = fout["y"] == want["y"];
    outcome(
        frep.inter_stage_dma_bytes == 0
            && matches
            && sout["y"] == fout["y"]
            && srep.total_cycles > frep.total_cycles
            && srep.inter_stage_dma_bytes > 0,
        format!(
            "fused {} cycles, {} inter-stage bytes, oracle {}; staged {} cycles, {} inter-stage bytes, outputs {}",
            frep.total_cycles,
            frep.inter_stage_dma_bytes,
            if matches { "equal" } else { "differs" },
            srep.total_cycles,
            srep.inter_stage_dma_bytes,
            if sout["y"] == fout["y"] { "equal" } else { "differ" },
        ),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut identical = 0;
    let manifests = ["fir-run.json", "fft128-run.json"];
    for name in manifests {
        let outs: Vec<_> = (0..2)
            .map(|i| {
                let out = tmp.path().join(format!("{name}-{i}"));
                let status = Command::new(env!("CARGO_BIN_EXE_sigdla"))
                    .arg("run")
                    .arg(fixtures().join(name))
                    .arg("--out")
                    .arg(&out)
                    .status()
                    .unwrap();
                assert!(status.success(), "{name}");
                dir_bytes(&out)
            })
            .collect();
        identical += usize::from(outs[0] == outs[1] && !outs[0].is_empty());
    }
    outcome(
        identical == manifests.len(),
        format!(
            "{identical}/{} manifests byte-identical across two runs",
            manifests.len()
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 7] = [
        ("composed multiplier", multiplier),
        ("shuffle fabric", fabric),
        ("multiply-add counts", counts),
        ("bit-exactness and precision", precision),
        ("speedups", speedups),
        ("fused pipeline", pipeline),
        ("run determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!(
            "{} criterion {} {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
