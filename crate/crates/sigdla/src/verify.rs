//! Simulation-versus-oracle checks.

use sigdla_core::engine::{run, EngineError, MachineConfig, Tensors};
use sigdla_core::mapper::{MapError, TensorPlan, WorkloadKind};
use sigdla_core::reference::{self, ComplexVec};
use sigdla_core::{Program, Workload};

use crate::oracle::{expected, OracleError};

/// Relative RMS bound of the FFT against `DFT / N`, by activation width.
/// Calibrated on random full-range inputs up to N = 1024.
pub fn fft_rms_bound(bits: u32) -> Option<f64> {
    match bits {
        16 => Some(2e-3),
        8 => Some(0.25),
        _ => None,
    }
}

/// Relative RMS bound of the 2-D DCT against the real transform.
pub fn dct_rms_bound(a_bits: u32, w_bits: u32) -> Option<f64> {
    match (a_bits, w_bits) {
        (16, 8..) => Some(1e-2),
        (8, 8..) => Some(0.1),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Largest absolute (bit-exact checks) or relative RMS error.
    pub error: f64,
    pub bound: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn complex(v: &[i64]) -> ComplexVec {
    ComplexVec::new(
        v.iter().step_by(2).map(|&x| x as f64).collect(),
        v.iter().skip(1).step_by(2).map(|&x| x as f64).collect(),
    )
}

fn max_abs_diff(a: &[i64], b: &[i64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).unsigned_abs()).max().unwrap_or(0) as f64
}

/// Run one input set and compare against the oracles.
pub fn check_case(
    label: &str,
    w: &Workload,
    program: &Program,
    plan: &TensorPlan,
    inputs: &Tensors,
    machine: &MachineConfig,
) -> Result<Vec<Check>, VerifyError> {
    let (got, _) = run(program, plan, inputs, machine)?;
    let want = expected(w, plan, inputs)?;
    let mut checks = Vec::new();
    for (name, w_vals) in &want {
        let g = got.get(name).map(Vec::as_slice).unwrap_or(&[]);
        let err = max_abs_diff(g, w_vals);
        checks.push(Check {
            name: format!("{label}: {name} bit-exact"),
            passed: err == 0.0,
            error: err,
            bound: 0.0,
        });
    }
    let x = &inputs["x"];
    let y = &got["y"];
    match &w.kind {
        WorkloadKind::Fft { n, .. } => {
            if let Some(bound) = fft_rms_bound(w.bitwidth.a_bits.bits()) {
                let want = reference::dft(&complex(x)).scale(1.0 / *n as f64);
                let err = reference::relative_rms(&complex(y), &want);
                checks.push(Check {
                    name: format!("{label}: y vs DFT/N relative RMS"),
                    passed: err <= bound,
                    error: err,
                    bound,
                });
            }
        }
        WorkloadKind::Dct2d { .. } => {
            if let Some(bound) = dct_rms_bound(w.bitwidth.a_bits.bits(), w.bitwidth.w_bits.bits()) {
                let frac = plan.tensor("y").map_or(0, |t| t.frac_bits);
                let scale = (-frac as f64).exp2();
                let got: Vec<f64> = y.iter().map(|&v| v as f64 * scale).collect();
                let mut want = Vec::with_capacity(x.len());
                for blk in x.chunks(64) {
                    let mut b = [0.0; 64];
                    b.iter_mut().zip(blk).for_each(|(d, &s)| *d = s as f64);
                    want.extend(reference::dct2d(&b));
                }
                let err = reference::relative_rms_real(&got, &want);
                checks.push(Check {
                    name: format!("{label}: y vs real DCT relative RMS"),
                    passed: err <= bound,
                    error: err,
                    bound,
                });
            }
        }
        _ => {}
    }
    Ok(checks)
}
