//! Tensor path controls: mux, demux, merge, split, aggregator and the
//! recurrence repository pair.

mod aggregator;
mod merge;
mod mux;
mod repo;
mod sync;

use thiserror::Error;

use crate::element::NegotiationError;
use crate::tensor::{Buffer, Caps, ClockTime, DataType, Framerate, SpecError, TensorDim, TensorSpec, RANK};

pub use aggregator::{Aggregator, AggregatorConfig};
pub use merge::{merge_concat, merged_spec, split_slice, split_specs};
pub use mux::{demux_split, mux_combine};
pub use repo::{RepoRegistry, RepoSlot};
pub use sync::{mux_match, Combined, SyncCollector, SyncPolicy};

pub(crate) use aggregator::AGGREGATOR;
pub(crate) use merge::{MERGE, SPLIT};
pub(crate) use mux::{DEMUX, MUX};
pub(crate) use repo::{REPOSINK, REPOSRC};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("IndexOutOfRange: tensor {index} requested from a {count}-tensor frame")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("TypeMismatch: {0}")]
    TypeMismatch(String),
    #[error("SizeSumMismatch: sizes sum to {sum} but the extent is {extent}")]
    SizeSumMismatch { sum: u64, extent: u32 },
    #[error("StarvationTimeout: sink pad {pad} produced nothing for {waited_ms} ms")]
    StarvationTimeout { pad: usize, waited_ms: u64 },
    #[error("SpecMismatch: {0}")]
    SpecMismatch(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

impl From<FlowError> for NegotiationError {
    fn from(e: FlowError) -> Self {
        NegotiationError::new(e.to_string())
    }
}

/// Byte geometry of one tensor around an axis: `outer` runs of `block`
/// bytes, where a block holds `extent` slices of `inner` bytes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisLayout {
    pub inner: usize,
    pub extent: usize,
    pub outer: usize,
}

impl AxisLayout {
    pub fn new(dim: &TensorDim, dtype: DataType, axis: usize) -> Self {
        let e = dim.extents();
        AxisLayout {
            inner: dtype.width() * e[..axis].iter().map(|&x| x as usize).product::<usize>(),
            extent: e[axis] as usize,
            outer: e[axis + 1..].iter().map(|&x| x as usize).product(),
        }
    }

    pub fn block(&self) -> usize {
        self.inner * self.extent
    }
}

/// Concatenates tensors along an axis. Every part must share `outer` and `inner`.
pub(crate) fn concat_bytes(parts: &[(&[u8], AxisLayout)]) -> Vec<u8> {
    let total: usize = parts.iter().map(|(b, _)| b.len()).sum();
    let mut out = Vec::with_capacity(total);
    let outer = parts.first().map_or(0, |(_, l)| l.outer);
    for o in 0..outer {
        for (bytes, l) in parts {
            let b = l.block();
            out.extend_from_slice(&bytes[o * b..(o + 1) * b]);
        }
    }
    out
}

/// Cuts a tensor along an axis into consecutive pieces of `sizes` slices.
pub(crate) fn slice_bytes(bytes: &[u8], layout: AxisLayout, sizes: &[usize]) -> Vec<Vec<u8>> {
    let mut parts: Vec<Vec<u8>> = sizes
        .iter()
        .map(|s| Vec::with_capacity(s * layout.inner * layout.outer))
        .collect();
    let block = layout.block();
    for o in 0..layout.outer {
        let mut at = o * block;
        for (part, &s) in parts.iter_mut().zip(sizes) {
            let len = s * layout.inner;
            part.extend_from_slice(&bytes[at..at + len]);
            at += len;
        }
    }
    parts
}

pub(crate) fn check_axis(raw: &str) -> Result<(), String> {
    match raw.parse::<usize>() {
        Ok(a) if a < RANK => Ok(()),
        _ => Err(format!("axis must be 0..{}, got '{raw}'", RANK - 1)),
    }
}

pub(crate) fn check_sync_mode(raw: &str) -> Result<(), String> {
    raw.parse::<SyncPolicy>().map(|_| ())
}

/// Output rate of a synchronized combination of inputs.
pub(crate) fn combined_rate(policy: SyncPolicy, rates: &[Framerate]) -> Framerate {
    match policy {
        SyncPolicy::Slowest => rates.iter().fold(Framerate::WILDCARD, |a, &r| a.min_concrete(r)),
        SyncPolicy::Fastest => rates.iter().fold(Framerate::WILDCARD, |a, &r| a.max_concrete(r)),
        SyncPolicy::Base(i) => rates.get(i).copied().unwrap_or(Framerate::WILDCARD),
    }
}

pub(crate) fn check_base(policy: SyncPolicy, pads: usize) -> Result<(), NegotiationError> {
    match policy {
        SyncPolicy::Base(i) if i >= pads => Err(NegotiationError::new(format!(
            "sync-mode base:{i} names a sink pad that does not exist ({pads} linked)"
        ))),
        _ => Ok(()),
    }
}

/// The single tensor spec of a tensor stream input.
pub(crate) fn expect_tensor<'a>(pad: &str, caps: &'a Caps) -> Result<&'a TensorSpec, NegotiationError> {
    caps.as_tensor()
        .ok_or_else(|| NegotiationError::on_pad(pad, format!("expected other/tensor, got {caps}")))
}

fn max_pts(frames: &[Buffer]) -> ClockTime {
    frames.iter().map(|b| b.pts).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_around_axes() {
        let dim = TensorDim::new([2, 3, 4, 5]).unwrap();
        let l = AxisLayout::new(&dim, DataType::F32, 1);
        assert_eq!((l.inner, l.extent, l.outer), (8, 3, 20));
        let l = AxisLayout::new(&dim, DataType::U8, 3);
        assert_eq!((l.inner, l.extent, l.outer), (24, 5, 1));
    }

    #[test]
    fn sync_mode_spellings() {
        assert_eq!("base:2".parse(), Ok(SyncPolicy::Base(2)));
        assert!(check_sync_mode("base:x").is_err());
        assert!(check_sync_mode("newest").is_err());
        assert_eq!(SyncPolicy::Base(1).to_string(), "base:1");
    }

    #[test]
    fn rates_per_policy() {
        let r = [Framerate::fps(60), Framerate::fps(30), Framerate::WILDCARD];
        assert_eq!(combined_rate(SyncPolicy::Slowest, &r), Framerate::fps(30));
        assert_eq!(combined_rate(SyncPolicy::Fastest, &r), Framerate::fps(60));
        assert_eq!(combined_rate(SyncPolicy::Base(0), &r), Framerate::fps(60));
    }
}
