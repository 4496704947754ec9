//! Expected outputs of a mapped workload, computed by the scalar reference
//! implementations rather than the simulator.

use sigdla_core::engine::Tensors;
use sigdla_core::mapper::{dct_coefficients, dwt_level_name, ConvLayer, TensorPlan, WorkloadKind};
use sigdla_core::reference::{self, ConvShape};
use sigdla_core::Workload;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("no reference for {0}")]
    Unsupported(&'static str),
    #[error("missing tensor `{0}`")]
    Missing(String),
    #[error("plan records no shift for `{0}`")]
    NoShift(String),
}

fn shift(plan: &TensorPlan, stage: &str) -> Result<u32, OracleError> {
    plan.shifts
        .iter()
        .find(|(s, _)| s == stage)
        .map(|s| s.1)
        .ok_or_else(|| OracleError::NoShift(stage.to_string()))
}

fn get<'a>(t: &'a Tensors, name: &str) -> Result<&'a [i64], OracleError> {
    t.get(name)
        .map(Vec::as_slice)
        .ok_or_else(|| OracleError::Missing(name.to_string()))
}

/// Every output tensor the plan declares, from the oracles.
pub fn expected(w: &Workload, plan: &TensorPlan, inputs: &Tensors) -> Result<Tensors, OracleError> {
    let mut out = Tensors::new();
    let x = get(inputs, "x")?;
    let y = match &w.kind {
        WorkloadKind::Pipeline { stages, .. } => {
            let mut act = x.to_vec();
            for (i, s) in stages.iter().enumerate() {
                act = stage(s, plan, inputs, &act, &format!("s{i}_"), &mut out)?;
            }
            act
        }
        WorkloadKind::ConvLayer(_) => stage(w, plan, inputs, x, "", &mut out)?,
        WorkloadKind::Network(_) => return Err(OracleError::Unsupported("count-only networks")),
        _ => stage(w, plan, inputs, x, "", &mut out)?,
    };
    out.insert("y".into(), y);
    Ok(out)
}

fn conv(l: &ConvLayer, inputs: &Tensors, x: &[i64], prefix: &str) -> Result<Vec<i64>, OracleError> {
    let weights = if l.weights.is_empty() {
        get(inputs, &format!("{prefix}weights"))?
    } else {
        &l.weights
    };
    let shape = ConvShape {
        h: l.h,
        w: l.w,
        c: l.c,
        k: l.k,
        m: l.m,
        stride: l.stride,
    };
    Ok(reference::requantize(
        &reference::conv(&shape, x, weights),
        l.shift,
        l.relu,
    ))
}

fn stage(
    w: &Workload,
    plan: &TensorPlan,
    inputs: &Tensors,
    x: &[i64],
    prefix: &str,
    extra: &mut Tensors,
) -> Result<Vec<i64>, OracleError> {
    Ok(match &w.kind {
        WorkloadKind::Fft { .. } => {
            let pairs: Vec<(i64, i64)> = x.chunks(2).map(|c| (c[0], c[1])).collect();
            reference::fft_fixed(&pairs, w.bitwidth.a_bits.bits())
                .into_iter()
                .flat_map(|(a, b)| [a, b])
                .collect()
        }
        WorkloadKind::Fir { taps, shift, .. } => reference::requantize(&reference::fir(x, taps), *shift, false),
        WorkloadKind::Dct2d { .. } => {
            let c = dct_coefficients(w.bitwidth.w_bits.bits());
            let s1 = shift(plan, &format!("{prefix}dct_pass1"))?;
            let s2 = shift(plan, &format!("{prefix}dct_pass2"))?;
            dct_blocks(x, &c, s1, s2)
        }
        WorkloadKind::Dwt {
            levels, lo, hi, shift, ..
        } => {
            let bands = reference::dwt_int(x, lo, hi, *levels, *shift);
            // Level l interleaves its approximation and detail.
            let mut approx = x.to_vec();
            let mut last = Vec::new();
            for (l, d) in bands.details.iter().enumerate() {
                approx = reference::dwt_int(&approx, lo, hi, 1, *shift).approx;
                let inter: Vec<i64> = approx.iter().zip(d).flat_map(|(&a, &d)| [a, d]).collect();
                if l + 1 < *levels {
                    extra.insert(dwt_level_name(prefix, l), inter);
                } else {
                    last = inter;
                }
            }
            last
        }
        WorkloadKind::ConvLayer(l) => conv(l, inputs, x, prefix)?,
        WorkloadKind::Pipeline { .. } => return Err(OracleError::Unsupported("nested pipelines")),
        WorkloadKind::Network(_) => return Err(OracleError::Unsupported("count-only networks")),
    })
}

/// Row pass then column pass, rounding after each like the mapping.
fn dct_blocks(x: &[i64], c: &[i64], s1: u32, s2: u32) -> Vec<i64> {
    let round = |acc: i64, s: u32| reference::requantize(&[acc], s, false)[0];
    let mut out = Vec::with_capacity(x.len());
    for blk in x.chunks(64) {
        let mut u = [0i64; 64];
        for r in 0..8 {
            for k in 0..8 {
                u[r * 8 + k] = round((0..8).map(|n| blk[r * 8 + n] * c[k * 8 + n]).sum(), s1);
            }
        }
        for k in 0..8 {
            for col in 0..8 {
                out.push(round((0..8).map(|n| c[k * 8 + n] * u[n * 8 + col]).sum(), s2));
            }
        }
    }
    out
}
