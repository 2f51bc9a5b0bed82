use std::sync::Arc;
use std::time::Duration;

use crate::element::props::{check_uint_list, parse_uint_list};
use crate::element::{
    pad_index, ConfigError, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext,
    Negotiation, NegotiationError, PadDirection, PadTemplate, PropKind, PropSpec, StaticFactory,
};
use crate::runtime::Outputs;
use crate::tensor::{Buffer, Caps, Framerate, TensorInfo, TensorsSpec};

use super::{check_base, check_sync_mode, combined_rate, max_pts, Combined, FlowError, SyncCollector, SyncPolicy};

/// Member tensors of a tensor stream frame type.
fn members(caps: &Caps) -> Option<Vec<TensorInfo>> {
    match caps {
        Caps::Tensor(s) => Some(vec![s.info()]),
        Caps::Tensors(s) => Some(s.tensors().to_vec()),
        _ => None,
    }
}

/// Packs frames into one `other/tensors` frame, reusing their memories.
/// Containers among the inputs are flattened. The stamp is the newest input's.
pub fn mux_combine(frames: &[Buffer], framerate: Framerate) -> Result<Buffer, FlowError> {
    let mut infos = Vec::new();
    for f in frames {
        infos.extend(
            members(f.caps()).ok_or_else(|| FlowError::SpecMismatch(format!("cannot mux {}", f.caps())))?,
        );
    }
    let caps = Arc::new(Caps::Tensors(TensorsSpec::new(infos, framerate)?));
    pack(frames, caps, max_pts(frames))
}

fn pack(frames: &[Buffer], caps: Arc<Caps>, pts: u64) -> Result<Buffer, FlowError> {
    let memories = frames.iter().flat_map(|f| f.memories().iter().cloned()).collect();
    Ok(Buffer::from_memories(caps, memories, pts)?)
}

/// Splits a container into standalone tensors, one per entry of `picks`.
/// Payloads are shared, not copied.
pub fn demux_split(buffer: &Buffer, picks: &[usize]) -> Result<Vec<Buffer>, FlowError> {
    let infos = members(buffer.caps())
        .ok_or_else(|| FlowError::SpecMismatch(format!("cannot demux {}", buffer.caps())))?;
    let rate = buffer.caps().framerate();
    picks
        .iter()
        .map(|&i| {
            let info = infos.get(i).ok_or(FlowError::IndexOutOfRange {
                index: i,
                count: infos.len(),
            })?;
            let caps = Arc::new(Caps::Tensor(crate::tensor::TensorSpec::new(info.dim, info.dtype, rate)));
            Ok(Buffer::new(caps, buffer.memories()[i].clone(), buffer.pts)?.with_seq(buffer.seq))
        })
        .collect()
}

// tensor_mux

#[derive(Debug)]
pub(crate) struct MuxConfig {
    pub policy: SyncPolicy,
    pub starvation: Option<Duration>,
}

pub(crate) fn sync_props_of(props: &crate::element::Properties) -> Result<MuxConfig, ConfigError> {
    let policy = props
        .str("sync-mode")
        .unwrap_or("slowest")
        .parse()
        .map_err(ConfigError::BadProperty)?;
    let ms = props.int("starvation-timeout").unwrap_or(0);
    Ok(MuxConfig {
        policy,
        starvation: (ms > 0).then(|| Duration::from_millis(ms as u64)),
    })
}

/// Shared by every element that synchronizes several sink pads.
pub(crate) struct Synchronized {
    pub collector: SyncCollector,
    eos_sent: bool,
}

impl Synchronized {
    pub fn new(cfg: &MuxConfig, pads: usize) -> Self {
        Synchronized {
            collector: SyncCollector::new(cfg.policy, pads).with_starvation_timeout(cfg.starvation),
            eos_sent: false,
        }
    }

    /// Feeds one frame; `emit` builds and pushes each combined output.
    pub fn chain(
        &mut self,
        pad: usize,
        buffer: Buffer,
        out: &mut Outputs<'_>,
        mut emit: impl FnMut(Combined, &mut Outputs<'_>) -> Result<Flow, ElementError>,
    ) -> Result<Flow, ElementError> {
        let mut flow = Flow::Ok;
        for c in self.collector.push(pad, buffer)? {
            if emit(c, out)? == Flow::Eos {
                flow = Flow::Eos;
            }
        }
        if self.collector.finished() {
            self.finish(out)?;
            return Ok(Flow::Eos);
        }
        Ok(flow)
    }

    pub fn eos(
        &mut self,
        pad: usize,
        out: &mut Outputs<'_>,
        mut emit: impl FnMut(Combined, &mut Outputs<'_>) -> Result<Flow, ElementError>,
    ) -> Result<(), ElementError> {
        for c in self.collector.eos(pad) {
            emit(c, out)?;
        }
        if self.collector.finished() || out.all_inputs_eos() {
            self.finish(out)?;
        }
        Ok(())
    }

    fn finish(&mut self, out: &mut Outputs<'_>) -> Result<(), ElementError> {
        if !self.eos_sent {
            self.eos_sent = true;
            out.push_eos_all()?;
        }
        Ok(())
    }
}

struct Mux {
    sync: Synchronized,
    caps: Arc<Caps>,
    seq: u64,
}

impl Element for Mux {
    fn chain(&mut self, pad: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let (caps, seq) = (&self.caps, &mut self.seq);
        self.sync.chain(pad, buffer, out, |c, out| {
            let b = pack(&c.frames, caps.clone(), c.pts)?.with_seq(*seq);
            *seq += 1;
            out.push(0, b)
        })
    }

    fn eos(&mut self, pad: usize, out: &mut Outputs<'_>) -> Result<(), ElementError> {
        let (caps, seq) = (&self.caps, &mut self.seq);
        self.sync.eos(pad, out, |c, out| {
            let b = pack(&c.frames, caps.clone(), c.pts)?.with_seq(*seq);
            *seq += 1;
            out.push(0, b)
        })
    }
}

impl ElementConfig for MuxConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        check_base(self.policy, n.sinks.len())?;
        let mut infos = Vec::new();
        for (pad, caps) in n.sinks {
            infos.extend(
                members(caps)
                    .ok_or_else(|| NegotiationError::on_pad(pad, format!("expected a tensor stream, got {caps}")))?,
            );
        }
        let rates: Vec<Framerate> = n.sinks.iter().map(|(_, c)| c.framerate()).collect();
        let spec = TensorsSpec::new(infos, combined_rate(self.policy, &rates))
            .map_err(|e| NegotiationError::new(e.to_string()))?;
        Ok(vec![Caps::Tensors(spec)])
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        Ok(Instance::chain(Mux {
            sync: Synchronized::new(self, cx.pads.sinks.len()),
            caps: Arc::new(cx.pads.srcs[0].1.clone()),
            seq: 0,
        }))
    }
}

pub(crate) const SYNC_PROPS: [PropSpec; 2] = [
    PropSpec::new(
        "sync-mode",
        PropKind::Checked(check_sync_mode),
        "slowest, fastest or base:<sink pad index>",
    )
    .default("slowest"),
    PropSpec::new(
        "starvation-timeout",
        PropKind::Int { min: 0, max: i64::MAX },
        "fail when a pad stays empty this many ms under slowest; 0 waits forever",
    )
    .default("0"),
];

pub(crate) const MUX: StaticFactory = StaticFactory {
    kind: "tensor_mux",
    aliases: &[],
    description: "Combines tensor streams into one other/tensors stream",
    properties: &SYNC_PROPS,
    pads: &[
        PadTemplate::request("sink_%u", PadDirection::Sink, "other/tensor; other/tensors"),
        PadTemplate::always("src", PadDirection::Src, "other/tensors"),
    ],
    configure: |props, _| Ok(Arc::new(sync_props_of(props)?)),
};

// tensor_demux

#[derive(Debug)]
struct DemuxConfig {
    pick: Option<Vec<usize>>,
}

impl DemuxConfig {
    fn picks(&self, srcs: &[String]) -> Vec<usize> {
        srcs.iter()
            .enumerate()
            .map(|(k, name)| match &self.pick {
                Some(p) => p.get(k).copied().unwrap_or(usize::MAX),
                None => pad_index(name).unwrap_or(k),
            })
            .collect()
    }
}

struct Demux {
    picks: Vec<usize>,
}

impl Element for Demux {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let mut flow = Flow::Eos;
        for (pad, b) in demux_split(&buffer, &self.picks)?.into_iter().enumerate() {
            flow = flow.and(out.push(pad, b)?);
        }
        Ok(flow)
    }
}

impl ElementConfig for DemuxConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        let input = n.single_input();
        let infos = members(input)
            .ok_or_else(|| NegotiationError::on_pad("sink", format!("expected a tensor stream, got {input}")))?;
        let rate = input.framerate();
        if let Some(p) = &self.pick {
            if p.len() < n.srcs.len() {
                return Err(NegotiationError::new(format!(
                    "tensorpick lists {} entries for {} source pads",
                    p.len(),
                    n.srcs.len()
                )));
            }
        }
        self.picks(n.srcs)
            .into_iter()
            .map(|i| {
                let info = infos.get(i).ok_or_else(|| {
                    NegotiationError::from(FlowError::IndexOutOfRange {
                        index: i,
                        count: infos.len(),
                    })
                })?;
                Ok(Caps::Tensor(crate::tensor::TensorSpec::new(info.dim, info.dtype, rate)))
            })
            .collect()
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let srcs: Vec<String> = cx.pads.srcs.iter().map(|(p, _)| p.clone()).collect();
        Ok(Instance::chain(Demux {
            picks: self.picks(&srcs),
        }))
    }
}

pub(crate) const DEMUX: StaticFactory = StaticFactory {
    kind: "tensor_demux",
    aliases: &[],
    description: "Splits an other/tensors stream into one stream per member",
    properties: &[PropSpec::new(
        "tensorpick",
        PropKind::Checked(check_uint_list),
        "member index for each source pad, in pad order",
    )],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "other/tensors"),
        PadTemplate::request("src_%u", PadDirection::Src, "other/tensor"),
    ],
    configure: |props, _| {
        let pick = props
            .str("tensorpick")
            .map(|raw| parse_uint_list(raw).map(|v| v.into_iter().map(|x| x as usize).collect()))
            .transpose()
            .map_err(ConfigError::BadProperty)?;
        Ok(Arc::new(DemuxConfig { pick }))
    },
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::PadLayout;
    use crate::runtime::Harness;
    use crate::tensor::{DataType, Payload, TensorSpec};
    use proptest::prelude::*;

    fn tensor(extents: [u32; 4], dtype: DataType, bytes: Vec<u8>, pts: u64) -> Buffer {
        Buffer::new(Arc::new(Caps::Tensor(TensorSpec::of(extents, dtype))), Payload::from_vec(bytes), pts).unwrap()
    }

    #[test]
    fn single_input_is_one_member_container() {
        let b = tensor([2, 1, 1, 1], DataType::U8, vec![1, 2], 7);
        let m = mux_combine(std::slice::from_ref(&b), Framerate::WILDCARD).unwrap();
        assert_eq!(m.caps().as_tensors().unwrap().num_tensors(), 1);
        assert_eq!(m.pts, 7);
        assert!(m.memories()[0].ptr_eq(b.payload()));
    }

    #[test]
    fn demux_three_members() {
        let a = tensor([2, 1, 1, 1], DataType::U8, vec![1, 2], 5);
        let b = tensor([1, 1, 1, 1], DataType::F32, vec![0; 4], 5);
        let c = tensor([3, 1, 1, 1], DataType::I8, vec![9; 3], 5);
        let m = mux_combine(&[a.clone(), b.clone(), c.clone()], Framerate::WILDCARD).unwrap();
        let parts = demux_split(&m, &[0, 1, 2]).unwrap();
        assert_eq!(parts.len(), 3);
        for (p, orig) in parts.iter().zip([&a, &b, &c]) {
            assert_eq!(p.caps(), orig.caps());
            assert_eq!(p.bytes(), orig.bytes());
            assert_eq!(p.pts, 5);
        }
        assert_eq!(
            demux_split(&m, &[5]).unwrap_err(),
            FlowError::IndexOutOfRange { index: 5, count: 3 }
        );
    }

    fn layout(sinks: usize) -> PadLayout {
        let caps = Caps::Tensor(TensorSpec::of([1, 1, 1, 1], DataType::U8));
        PadLayout {
            sinks: (0..sinks).map(|i| (format!("sink_{i}"), caps.clone())).collect(),
            srcs: vec![(
                "src".into(),
                Caps::Tensors(TensorsSpec::new(vec![caps.as_tensor().unwrap().info(); sinks], Framerate::WILDCARD).unwrap()),
            )],
        }
    }

    #[test]
    fn element_restamps_sequence_and_ends() {
        let cfg: Arc<dyn ElementConfig> = Arc::new(MuxConfig {
            policy: SyncPolicy::Slowest,
            starvation: None,
        });
        let mut h = Harness::from_config(&cfg, &layout(2)).unwrap();
        for ts in 0..3u64 {
            h.push(0, tensor([1, 1, 1, 1], DataType::U8, vec![ts as u8], ts * 10).with_seq(100)).unwrap();
            h.push(1, tensor([1, 1, 1, 1], DataType::U8, vec![ts as u8], ts * 10).with_seq(200)).unwrap();
        }
        h.eos(0).unwrap();
        let out = h.take();
        let seqs: Vec<u64> = out.iter().map(|(_, b)| b.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2]);
        assert_eq!(h.capture.eos, vec![0]);
        h.eos(1).unwrap();
        assert_eq!(h.capture.eos, vec![0]);
    }

    fn arb_frames() -> impl Strategy<Value = Vec<Vec<(u32, Vec<u8>)>>> {
        // pads x frames x (extent, bytes)
        (1usize..4, 1usize..6).prop_flat_map(|(pads, frames)| {
            prop::collection::vec(
                (1u32..6).prop_flat_map(move |e| {
                    prop::collection::vec(prop::collection::vec(any::<u8>(), e as usize), frames)
                        .prop_map(move |fs| fs.into_iter().map(|b| (e, b)).collect::<Vec<_>>())
                }),
                pads,
            )
        })
    }

    proptest! {
        #[test]
        fn demux_inverts_mux(streams in arb_frames()) {
            let pads = streams.len();
            let mut sync = SyncCollector::new(SyncPolicy::Slowest, pads);
            let mut combined = Vec::new();
            let frames = streams[0].len();
            for k in 0..frames {
                for (p, s) in streams.iter().enumerate() {
                    let (e, bytes) = &s[k];
                    let b = tensor([*e, 1, 1, 1], DataType::U8, bytes.clone(), k as u64 * 1000);
                    combined.extend(sync.push(p, b).unwrap());
                }
            }
            for p in 0..pads {
                combined.extend(sync.eos(p));
            }
            prop_assert_eq!(combined.len(), frames);
            let picks: Vec<usize> = (0..pads).collect();
            for (k, c) in combined.iter().enumerate() {
                let m = mux_combine(&c.frames, Framerate::WILDCARD).unwrap();
                let parts = demux_split(&m, &picks).unwrap();
                for (p, part) in parts.iter().enumerate() {
                    prop_assert_eq!(part.bytes(), &streams[p][k].1[..]);
                }
            }
        }
    }
}
