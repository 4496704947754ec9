//! Multi-stage pipelines.
//!
//! Fused pipelines hand each stage's result to the next stage where it
//! already sits on chip. Staged pipelines store every intermediate result
//! to an off-chip scratch tensor and load it back, which is what a
//! per-kernel accelerator without on-chip hand-off has to do.

use alloc::format;
use alloc::vec::Vec;

use super::build::{Builder, OnChip};
use super::{invalid, MapError, Role, Workload, WorkloadKind};

/// Zero elements the stage needs before and after its input.
fn headroom(w: &Workload) -> (usize, usize) {
    match &w.kind {
        WorkloadKind::Fir { taps, .. } => (taps.len().saturating_sub(1), 0),
        WorkloadKind::Dwt { lo, hi, .. } => (0, lo.len().max(hi.len())),
        _ => (0, 0),
    }
}

pub(crate) fn map(b: &mut Builder, stages: &[Workload], staged: bool) -> Result<(), MapError> {
    let first = stages.first().ok_or_else(|| invalid("pipeline has no stages"))?;
    let mut cur = b.load_input(first)?;
    for (i, stage) in stages.iter().enumerate() {
        if i > 0 {
            let (len, width) = stage.input_shape()?;
            if cur.len != len || cur.width != width.bits() {
                return Err(MapError::ShapeMismatch {
                    stage: i,
                    expected: format!("{len} x {width}-bit"),
                    got: format!("{} x {}-bit", cur.len, cur.width),
                });
            }
            cur = if staged {
                spill_and_reload(b, cur, stage, i)?
            } else {
                if headroom(stage) != (0, 0) {
                    return Err(invalid(format!(
                        "stage {i} needs zero headroom around its input; stage the pipeline"
                    )));
                }
                cur
            };
        }
        cur = b.emit_stage(stage, cur, &format!("s{i}_"))?;
    }
    b.store_output(&cur, "y")
}

fn spill_and_reload(b: &mut Builder, cur: OnChip, next: &Workload, i: usize) -> Result<OnChip, MapError> {
    let name = format!("stage{i}_scratch");
    let bits = cur.width;
    if !(cur.offset * bits as usize).is_multiple_of(64) {
        return Err(invalid(format!("stage {i} input is not word aligned")));
    }
    let mut t = b.tensor(name.clone(), Role::Scratch, bits, cur.len, 0, Vec::new());
    t.frac_bits = cur.frac_bits;
    b.set_frac_bits(&name, cur.frac_bits);
    let words = t.byte_len() / 8;
    b.store_words(&t, 0, words, cur.region.word_start + cur.offset * bits as usize / 64);

    let (head, tail) = headroom(next);
    let per_word = 64 / bits as usize;
    let head_words = head.div_ceil(per_word);
    let region = b.alloc(format!("stage{i}_in"), head_words + words + tail.div_ceil(per_word))?;
    b.load_words(&t, 0, words, region.word_start + head_words);
    Ok(OnChip {
        region,
        offset: head_words * per_word,
        len: cur.len,
        width: bits,
        frac_bits: cur.frac_bits,
    })
}
