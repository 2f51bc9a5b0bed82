use std::sync::Arc;

use crate::element::props::{check_uint_list, parse_uint_list};
use crate::element::{
    ConfigError, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext, Negotiation,
    NegotiationError, PadDirection, PadTemplate, PropKind, PropSpec, StaticFactory,
};
use crate::runtime::Outputs;
use crate::tensor::{Buffer, Caps, Framerate, Payload, TensorSpec, MAX_EXTENT};

use super::mux::{sync_props_of, MuxConfig, Synchronized, SYNC_PROPS};
use super::{check_axis, check_base, combined_rate, concat_bytes, expect_tensor, max_pts, slice_bytes, AxisLayout, FlowError};

/// Type of the concatenation of `specs` along `axis`. The rate is the first input's.
pub fn merged_spec(specs: &[TensorSpec], axis: usize) -> Result<TensorSpec, FlowError> {
    let first = specs
        .first()
        .ok_or_else(|| FlowError::DimensionMismatch("nothing to merge".into()))?;
    let mut extent: u64 = 0;
    for (i, s) in specs.iter().enumerate() {
        if s.dtype != first.dtype {
            return Err(FlowError::TypeMismatch(format!(
                "input {i} is {} but input 0 is {}",
                s.dtype, first.dtype
            )));
        }
        for a in (0..4).filter(|&a| a != axis) {
            if s.dim.get(a) != first.dim.get(a) {
                return Err(FlowError::DimensionMismatch(format!(
                    "input {i} is {} but input 0 is {}; only axis {axis} may differ",
                    s.dim, first.dim
                )));
            }
        }
        extent += s.dim.get(axis) as u64;
    }
    if extent > MAX_EXTENT as u64 {
        return Err(FlowError::DimensionMismatch(format!(
            "merged extent {extent} on axis {axis} exceeds {MAX_EXTENT}"
        )));
    }
    let dim = first.dim.with_axis(axis, extent as u32)?;
    Ok(TensorSpec::new(dim, first.dtype, first.framerate))
}

fn concat_into(inputs: &[Buffer], caps: Arc<Caps>, axis: usize) -> Result<Buffer, FlowError> {
    let parts: Vec<(&[u8], AxisLayout)> = inputs
        .iter()
        .map(|b| {
            let s = b.caps().as_tensor().expect("checked tensor input");
            (b.bytes(), AxisLayout::new(&s.dim, s.dtype, axis))
        })
        .collect();
    Ok(Buffer::new(caps, Payload::from_vec(concat_bytes(&parts)), max_pts(inputs))?)
}

/// Concatenates single tensors along `axis` in memory order.
pub fn merge_concat(inputs: &[Buffer], axis: usize) -> Result<Buffer, FlowError> {
    let specs = inputs
        .iter()
        .map(|b| {
            b.caps()
                .as_tensor()
                .copied()
                .ok_or_else(|| FlowError::SpecMismatch(format!("cannot merge {}", b.caps())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let spec = merged_spec(&specs, axis)?;
    concat_into(inputs, Arc::new(Caps::Tensor(spec)), axis)
}

/// Types of the pieces of `spec` cut along `axis`.
pub fn split_specs(spec: &TensorSpec, axis: usize, sizes: &[u32]) -> Result<Vec<TensorSpec>, FlowError> {
    let sum: u64 = sizes.iter().map(|&s| s as u64).sum();
    let extent = spec.dim.get(axis);
    if sum != extent as u64 {
        return Err(FlowError::SizeSumMismatch { sum, extent });
    }
    sizes
        .iter()
        .map(|&s| Ok(TensorSpec::new(spec.dim.with_axis(axis, s)?, spec.dtype, spec.framerate)))
        .collect()
}

/// Cuts one tensor along `axis` into pieces of `sizes`. Stamps are kept.
pub fn split_slice(buffer: &Buffer, axis: usize, sizes: &[u32]) -> Result<Vec<Buffer>, FlowError> {
    let spec = buffer
        .caps()
        .as_tensor()
        .ok_or_else(|| FlowError::SpecMismatch(format!("cannot split {}", buffer.caps())))?;
    let specs = split_specs(spec, axis, sizes)?;
    let caps: Vec<Arc<Caps>> = specs.into_iter().map(|s| Arc::new(Caps::Tensor(s))).collect();
    slice_into(buffer, &caps, axis, sizes)
}

fn slice_into(buffer: &Buffer, caps: &[Arc<Caps>], axis: usize, sizes: &[u32]) -> Result<Vec<Buffer>, FlowError> {
    let spec = buffer.caps().as_tensor().expect("checked tensor input");
    if caps.len() == 1 {
        return Ok(vec![buffer.clone().relabel(caps[0].clone())?]);
    }
    let sizes: Vec<usize> = sizes.iter().map(|&s| s as usize).collect();
    slice_bytes(buffer.bytes(), AxisLayout::new(&spec.dim, spec.dtype, axis), &sizes)
        .into_iter()
        .zip(caps)
        .map(|(bytes, c)| Ok(Buffer::new(c.clone(), Payload::from_vec(bytes), buffer.pts)?.with_seq(buffer.seq)))
        .collect()
}

// tensor_merge

#[derive(Debug)]
struct MergeConfig {
    sync: MuxConfig,
    axis: usize,
}

struct Merge {
    sync: Synchronized,
    caps: Arc<Caps>,
    axis: usize,
    seq: u64,
}

impl Merge {
    fn emit<'a>(
        caps: &'a Arc<Caps>,
        axis: usize,
        seq: &'a mut u64,
    ) -> impl FnMut(super::Combined, &mut Outputs<'_>) -> Result<Flow, ElementError> + 'a {
        move |c, out| {
            let mut b = concat_into(&c.frames, caps.clone(), axis)?.with_seq(*seq);
            b.pts = c.pts;
            *seq += 1;
            out.push(0, b)
        }
    }
}

impl Element for Merge {
    fn chain(&mut self, pad: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let emit = Merge::emit(&self.caps, self.axis, &mut self.seq);
        self.sync.chain(pad, buffer, out, emit)
    }

    fn eos(&mut self, pad: usize, out: &mut Outputs<'_>) -> Result<(), ElementError> {
        let emit = Merge::emit(&self.caps, self.axis, &mut self.seq);
        self.sync.eos(pad, out, emit)
    }
}

impl ElementConfig for MergeConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        check_base(self.sync.policy, n.sinks.len())?;
        let specs = n
            .sinks
            .iter()
            .map(|(pad, caps)| expect_tensor(pad, caps).copied())
            .collect::<Result<Vec<_>, _>>()?;
        let rates: Vec<Framerate> = specs.iter().map(|s| s.framerate).collect();
        let spec = merged_spec(&specs, self.axis)?.with_rate(combined_rate(self.sync.policy, &rates));
        Ok(vec![Caps::Tensor(spec)])
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        Ok(Instance::chain(Merge {
            sync: Synchronized::new(&self.sync, cx.pads.sinks.len()),
            caps: Arc::new(cx.pads.srcs[0].1.clone()),
            axis: self.axis,
            seq: 0,
        }))
    }
}

const MERGE_PROPS: &[PropSpec] = &[
    SYNC_PROPS[0],
    SYNC_PROPS[1],
    PropSpec::new("dimension", PropKind::Checked(check_axis), "axis to concatenate along, 0..3").default("0"),
];

pub(crate) const MERGE: StaticFactory = StaticFactory {
    kind: "tensor_merge",
    aliases: &[],
    description: "Concatenates synchronized tensor streams along one axis",
    properties: MERGE_PROPS,
    pads: &[
        PadTemplate::request("sink_%u", PadDirection::Sink, "other/tensor"),
        PadTemplate::always("src", PadDirection::Src, "other/tensor"),
    ],
    configure: |props, _| {
        Ok(Arc::new(MergeConfig {
            sync: sync_props_of(props)?,
            axis: axis_from(props)?,
        }))
    },
};

fn axis_from(props: &crate::element::Properties) -> Result<usize, ConfigError> {
    match props.str("dimension") {
        Some(raw) => raw.parse().map_err(|_| ConfigError::BadProperty(format!("bad dimension '{raw}'"))),
        None => Ok(0),
    }
}

// tensor_split

#[derive(Debug)]
struct SplitConfig {
    axis: usize,
    sizes: Vec<u32>,
}

struct Split {
    caps: Vec<Arc<Caps>>,
    axis: usize,
    sizes: Vec<u32>,
}

impl Element for Split {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let mut flow = Flow::Eos;
        for (pad, b) in slice_into(&buffer, &self.caps, self.axis, &self.sizes)?.into_iter().enumerate() {
            flow = flow.and(out.push(pad, b)?);
        }
        Ok(flow)
    }
}

impl ElementConfig for SplitConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        let spec = expect_tensor("sink", n.single_input())?;
        if n.srcs.len() != self.sizes.len() {
            return Err(NegotiationError::new(format!(
                "{} source pads for {} sizes",
                n.srcs.len(),
                self.sizes.len()
            )));
        }
        Ok(split_specs(spec, self.axis, &self.sizes)?
            .into_iter()
            .map(Caps::Tensor)
            .collect())
    }

    fn extra_pads(&self) -> Vec<(String, PadDirection)> {
        (0..self.sizes.len())
            .map(|i| (format!("src_{i}"), PadDirection::Src))
            .collect()
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        Ok(Instance::chain(Split {
            caps: cx.pads.srcs.iter().map(|(_, c)| Arc::new(c.clone())).collect(),
            axis: self.axis,
            sizes: self.sizes.clone(),
        }))
    }
}

pub(crate) const SPLIT: StaticFactory = StaticFactory {
    kind: "tensor_split",
    aliases: &[],
    description: "Cuts a tensor stream along one axis into several streams",
    properties: &[
        PropSpec::new("dimension", PropKind::Checked(check_axis), "axis to cut along, 0..3").default("0"),
        PropSpec::new("sizes", PropKind::Checked(check_uint_list), "extent of each piece, comma separated")
            .aliases(&["tensorseg"])
            .required(),
    ],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "other/tensor"),
        PadTemplate::request("src_%u", PadDirection::Src, "other/tensor"),
    ],
    configure: |props, _| {
        let sizes = parse_uint_list(props.str("sizes").unwrap_or_default()).map_err(ConfigError::BadProperty)?;
        if sizes.contains(&0) {
            return Err(ConfigError::BadProperty("split sizes must each be at least 1".into()));
        }
        Ok(Arc::new(SplitConfig {
            axis: axis_from(props)?,
            sizes,
        }))
    },
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DataType;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn tensor(extents: [u32; 4], dtype: DataType, bytes: Vec<u8>) -> Buffer {
        Buffer::new(Arc::new(Caps::Tensor(TensorSpec::of(extents, dtype))), Payload::from_vec(bytes), 0).unwrap()
    }

    fn random_tensor(extents: [u32; 4], dtype: DataType, seed: u64) -> Buffer {
        let n = extents.iter().product::<u32>() as usize * dtype.width();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        tensor(extents, dtype, (0..n).map(|_| rng.random()).collect())
    }

    /// Byte of element `idx` (innermost-first coordinates) computed by plain index arithmetic.
    fn at(bytes: &[u8], e: [u32; 4], w: usize, idx: [u32; 4]) -> &[u8] {
        let lin = idx[0] + e[0] * (idx[1] + e[1] * (idx[2] + e[2] * idx[3]));
        let o = lin as usize * w;
        &bytes[o..o + w]
    }

    fn all_indices(e: [u32; 4]) -> impl Iterator<Item = [u32; 4]> {
        (0..e[3]).flat_map(move |d| {
            (0..e[2]).flat_map(move |c| (0..e[1]).flat_map(move |b| (0..e[0]).map(move |a| [a, b, c, d])))
        })
    }

    #[test]
    fn uwb_pair_on_axis_zero() {
        let a = random_tensor([1, 1, 75, 1], DataType::F32, 1);
        let b = random_tensor([1, 1, 75, 1], DataType::F32, 2);
        let m = merge_concat(&[a.clone(), b.clone()], 0).unwrap();
        assert_eq!(m.caps().as_tensor().unwrap().dim.extents(), [2, 1, 75, 1]);
        for idx in all_indices([2, 1, 75, 1]) {
            let src = if idx[0] == 0 { &a } else { &b };
            let got = at(m.bytes(), [2, 1, 75, 1], 4, idx);
            assert_eq!(got, at(src.bytes(), [1, 1, 75, 1], 4, [0, idx[1], idx[2], idx[3]]));
        }
    }

    #[test]
    fn single_merge_is_identity() {
        let a = random_tensor([3, 2, 1, 1], DataType::U16, 3);
        assert_eq!(merge_concat(std::slice::from_ref(&a), 1).unwrap().bytes(), a.bytes());
    }

    #[test]
    fn mismatches() {
        let a = random_tensor([1, 2, 1, 1], DataType::F32, 1);
        let b = random_tensor([1, 3, 1, 1], DataType::F32, 2);
        let c = random_tensor([1, 2, 1, 1], DataType::U8, 3);
        assert!(matches!(merge_concat(&[a.clone(), b], 0), Err(FlowError::DimensionMismatch(_))));
        assert!(matches!(merge_concat(&[a, c], 0), Err(FlowError::TypeMismatch(_))));
    }

    #[test]
    fn split_against_oracle() {
        let x = random_tensor([6, 1, 1000, 1], DataType::U8, 9);
        let parts = split_slice(&x, 0, &[4, 2]).unwrap();
        assert_eq!(parts[0].caps().as_tensor().unwrap().dim.extents(), [4, 1, 1000, 1]);
        assert_eq!(parts[1].caps().as_tensor().unwrap().dim.extents(), [2, 1, 1000, 1]);
        for idx in all_indices([6, 1, 1000, 1]) {
            let (p, e0, off) = if idx[0] < 4 { (0, 4, 0) } else { (1, 2, 4) };
            let got = at(parts[p].bytes(), [e0, 1, 1000, 1], 1, [idx[0] - off, idx[1], idx[2], idx[3]]);
            assert_eq!(got, at(x.bytes(), [6, 1, 1000, 1], 1, idx));
        }
        assert_eq!(split_slice(&x, 0, &[6]).unwrap()[0].bytes(), x.bytes());
        assert_eq!(
            split_slice(&x, 0, &[4, 3]).unwrap_err(),
            FlowError::SizeSumMismatch { sum: 7, extent: 6 }
        );
    }

    fn arb_case() -> impl Strategy<Value = ([u32; 4], usize, Vec<u32>, u64)> {
        (0usize..4, prop::collection::vec(1u32..4, 1..4), prop::array::uniform4(1u32..4), any::<u64>()).prop_map(
            |(axis, sizes, mut e, seed)| {
                e[axis] = sizes.iter().sum();
                (e, axis, sizes, seed)
            },
        )
    }

    proptest! {
        #[test]
        fn split_then_merge_is_identity((e, axis, sizes, seed) in arb_case()) {
            let x = random_tensor(e, DataType::I16, seed);
            let parts = split_slice(&x, axis, &sizes).unwrap();
            let back = merge_concat(&parts, axis).unwrap();
            prop_assert_eq!(back.bytes(), x.bytes());
            prop_assert_eq!(back.caps(), x.caps());
        }

        #[test]
        fn merge_then_split_is_identity((e, axis, sizes, seed) in arb_case()) {
            let inputs: Vec<Buffer> = sizes
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let mut d = e;
                    d[axis] = s;
                    random_tensor(d, DataType::U8, seed.wrapping_add(i as u64))
                })
                .collect();
            let merged = merge_concat(&inputs, axis).unwrap();
            let parts = split_slice(&merged, axis, &sizes).unwrap();
            for (p, x) in parts.iter().zip(&inputs) {
                prop_assert_eq!(p.bytes(), x.bytes());
            }
        }
    }
}
