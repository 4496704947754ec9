//! Multiply-accumulate counts for workloads and count-only networks.

use alloc::vec::Vec;

use super::{Padding, Workload, WorkloadKind};

/// One layer of a count-only network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum Layer {
    Conv {
        out_channels: usize,
        kernel: usize,
        #[cfg_attr(feature = "serde", serde(default = "one"))]
        stride: usize,
        #[cfg_attr(feature = "serde", serde(default = "same"))]
        padding: Padding,
    },
    /// Max pooling; no multiplications.
    Pool { size: usize, stride: usize },
    /// Fully connected over the flattened activation.
    Fc { out: usize },
}

#[cfg(feature = "serde")]
fn one() -> usize {
    1
}

#[cfg(feature = "serde")]
fn same() -> Padding {
    Padding::Same
}

/// A layer stack applied to an `[h, w, c]` input.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Network {
    pub input: [usize; 3],
    pub layers: Vec<Layer>,
}

impl Network {
    /// Per-layer multiply-accumulate counts.
    pub fn layer_counts(&self) -> Vec<u64> {
        let [mut h, mut w, mut c] = self.input;
        self.layers
            .iter()
            .map(|layer| match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let out = |d: usize| match padding {
                        Padding::Same => d.div_ceil(stride),
                        Padding::Valid => d.saturating_sub(kernel) / stride + 1,
                    };
                    (h, w) = (out(h), out(w));
                    let n = (h * w * kernel * kernel * c * out_channels) as u64;
                    c = out_channels;
                    n
                }
                Layer::Pool { size, stride } => {
                    h = h.saturating_sub(size) / stride + 1;
                    w = w.saturating_sub(size) / stride + 1;
                    0
                }
                Layer::Fc { out } => {
                    let n = (h * w * c * out) as u64;
                    (h, w, c) = (1, 1, out);
                    n
                }
            })
            .collect()
    }
}

/// Multiply-accumulate operations a workload performs. FFTs count the
/// conventional `5 N log2 N` real operations.
pub fn count_mult_adds(w: &Workload) -> u64 {
    match &w.kind {
        WorkloadKind::Fft { n, .. } => 5 * *n as u64 * n.trailing_zeros() as u64,
        WorkloadKind::Fir { taps, length, .. } => (taps.len() * length) as u64,
        WorkloadKind::Dct2d { blocks, .. } => 1024 * *blocks as u64,
        WorkloadKind::Dwt {
            length, levels, lo, hi, ..
        } => (0..*levels)
            .map(|l| ((length >> (l + 1)) * (lo.len() + hi.len())) as u64)
            .sum(),
        WorkloadKind::ConvLayer(l) => l.mult_adds(),
        WorkloadKind::Pipeline { stages, .. } => stages.iter().map(count_mult_adds).sum(),
        WorkloadKind::Network(n) => n.layer_counts().iter().sum(),
    }
}
