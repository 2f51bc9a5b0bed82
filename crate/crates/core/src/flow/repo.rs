use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use crate::element::props::{check_caps, check_rate};
use crate::element::{
    ConfigError, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext, Negotiation,
    NegotiationError, PadDirection, PadTemplate, Produced, PropKind, PropSpec, RepoRole, Source, SourceClock,
    StaticFactory,
};
use crate::runtime::Outputs;
use crate::tensor::{Buffer, Caps, Framerate, Payload};

use super::FlowError;

/// A single-value store shared by one reposink and one reposrc.
#[derive(Debug)]
pub struct RepoSlot {
    caps: Arc<Caps>,
    value: Mutex<Buffer>,
    eos: AtomicBool,
}

impl RepoSlot {
    /// A slot holding an all-zero frame of `caps`.
    pub fn new(caps: Caps) -> Result<Self, FlowError> {
        let size = caps
            .byte_size()
            .ok_or_else(|| FlowError::SpecMismatch(format!("{caps} has no fixed frame size")))?;
        let caps = Arc::new(caps);
        let init = Buffer::new(caps.clone(), Payload::zeroed(size), 0)?;
        Ok(RepoSlot {
            caps,
            value: Mutex::new(init),
            eos: AtomicBool::new(false),
        })
    }

    pub fn caps(&self) -> &Caps {
        &self.caps
    }

    /// Replaces the stored value.
    pub fn push(&self, buffer: Buffer) -> Result<(), FlowError> {
        if !buffer.caps().is_compatible(&self.caps) {
            return Err(FlowError::SpecMismatch(format!(
                "slot holds {} but {} was pushed",
                self.caps,
                buffer.caps()
            )));
        }
        *self.value.lock().expect("slot lock") = buffer;
        Ok(())
    }

    /// The latest value; never blocks.
    pub fn pull(&self) -> Buffer {
        self.value.lock().expect("slot lock").clone()
    }

    pub fn end_of_stream(&self) {
        self.eos.store(true, Ordering::SeqCst);
    }

    pub fn is_eos(&self) -> bool {
        self.eos.load(Ordering::SeqCst)
    }
}

/// Slots of one pipeline run, by id.
#[derive(Debug, Clone, Default)]
pub struct RepoRegistry {
    slots: Arc<Mutex<HashMap<String, Arc<RepoSlot>>>>,
}

impl RepoRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The slot `id`, created for `caps` if it does not exist yet.
    pub fn bind(&self, id: &str, caps: &Caps) -> Result<Arc<RepoSlot>, FlowError> {
        let mut slots = self.slots.lock().expect("registry lock");
        if let Some(s) = slots.get(id) {
            return Ok(s.clone());
        }
        let slot = Arc::new(RepoSlot::new(caps.with_framerate(Framerate::WILDCARD))?);
        slots.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    pub fn get(&self, id: &str) -> Option<Arc<RepoSlot>> {
        self.slots.lock().expect("registry lock").get(id).cloned()
    }
}

// tensor_reposink

#[derive(Debug)]
struct RepoSinkConfig {
    slot: String,
}

struct RepoSink {
    slot: Arc<RepoSlot>,
}

impl Element for RepoSink {
    fn chain(&mut self, _: usize, buffer: Buffer, _: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        self.slot.push(buffer)?;
        Ok(Flow::Ok)
    }

    fn eos(&mut self, _: usize, _: &mut Outputs<'_>) -> Result<(), ElementError> {
        self.slot.end_of_stream();
        Ok(())
    }
}

impl ElementConfig for RepoSinkConfig {
    fn negotiate(&self, _: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        Ok(Vec::new())
    }

    fn repo_binding(&self) -> Option<(RepoRole, String, Option<Caps>)> {
        Some((RepoRole::Sink, self.slot.clone(), None))
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let slot = cx.repos.bind(&self.slot, &cx.pads.sinks[0].1)?;
        Ok(Instance::chain(RepoSink { slot }))
    }
}

pub(crate) const REPOSINK: StaticFactory = StaticFactory {
    kind: "tensor_reposink",
    aliases: &[],
    description: "Stores the latest frame in a recurrence slot",
    properties: &[PropSpec::new("slot", PropKind::Str, "slot id shared with a tensor_reposrc")
        .aliases(&["slot-index"])
        .required()],
    pads: &[PadTemplate::always("sink", PadDirection::Sink, "other/tensor; other/tensors")],
    configure: |props, _| {
        Ok(Arc::new(RepoSinkConfig {
            slot: props.str("slot").unwrap_or_default().to_string(),
        }))
    },
};

// tensor_reposrc

#[derive(Debug)]
struct RepoSrcConfig {
    slot: String,
    caps: Caps,
    rate: Framerate,
}

struct RepoSrc {
    slot: Arc<RepoSlot>,
    caps: Arc<Caps>,
    rate: Framerate,
    index: u64,
}

impl Source for RepoSrc {
    fn produce(&mut self, _: &dyn SourceClock) -> Result<Produced, ElementError> {
        if self.slot.is_eos() {
            return Ok(Produced::Eos);
        }
        let ts = self.rate.timestamp_of(self.index).unwrap_or(0);
        let buffer = self.slot.pull().relabel(self.caps.clone())?;
        let mut buffer = buffer.with_seq(self.index);
        buffer.pts = ts;
        self.index += 1;
        Ok(Produced::Buffer {
            buffer,
            due: Some(ts),
        })
    }
}

impl ElementConfig for RepoSrcConfig {
    fn negotiate(&self, _: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        Ok(vec![self.caps.with_framerate(self.rate)])
    }

    fn repo_binding(&self) -> Option<(RepoRole, String, Option<Caps>)> {
        Some((RepoRole::Src, self.slot.clone(), Some(self.caps.clone())))
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let slot = cx.repos.bind(&self.slot, &self.caps)?;
        Ok(Instance::source(RepoSrc {
            slot,
            caps: Arc::new(cx.pads.srcs[0].1.clone()),
            rate: self.rate,
            index: 0,
        }))
    }
}

pub(crate) const REPOSRC: StaticFactory = StaticFactory {
    kind: "tensor_reposrc",
    aliases: &[],
    description: "Emits the latest frame of a recurrence slot at a fixed rate",
    properties: &[
        PropSpec::new("slot", PropKind::Str, "slot id shared with a tensor_reposink")
            .aliases(&["slot-index"])
            .required(),
        PropSpec::new("caps", PropKind::Checked(check_caps), "frame type stored in the slot")
            .aliases(&["spec"])
            .required(),
        PropSpec::new("rate", PropKind::Checked(check_rate), "frames per second emitted").default("30"),
    ],
    pads: &[PadTemplate::always("src", PadDirection::Src, "other/tensor; other/tensors")],
    configure: |props, _| {
        let caps: Caps = props
            .str("caps")
            .unwrap_or_default()
            .parse()
            .map_err(|e: crate::tensor::SpecError| ConfigError::BadProperty(e.to_string()))?;
        if caps.byte_size().is_none() {
            return Err(ConfigError::BadProperty(format!("{caps} has no fixed frame size")));
        }
        let rate: Framerate = props
            .str("rate")
            .unwrap_or("30")
            .parse()
            .map_err(|e: crate::tensor::SpecError| ConfigError::BadProperty(e.to_string()))?;
        if rate.is_wildcard() {
            return Err(ConfigError::BadProperty("reposrc needs a non-zero rate".into()));
        }
        Ok(Arc::new(RepoSrcConfig {
            slot: props.str("slot").unwrap_or_default().to_string(),
            caps,
            rate,
        }))
    },
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{DataType, TensorSpec};

    fn caps() -> Caps {
        Caps::Tensor(TensorSpec::of([4, 1, 1, 1], DataType::F32))
    }

    #[test]
    fn zero_before_push_then_latest() {
        let reg = RepoRegistry::new();
        let slot = reg.bind("h", &caps()).unwrap();
        let first = slot.pull();
        assert!(first.bytes().iter().all(|&b| b == 0));
        assert_eq!(first.bytes().len(), 16);

        let x = Buffer::new(Arc::new(caps()), Payload::from_vec((0..16).collect()), 5).unwrap();
        slot.push(x.clone()).unwrap();
        assert_eq!(slot.pull().bytes(), x.bytes());
        assert_eq!(slot.pull().bytes(), x.bytes());
        assert!(Arc::ptr_eq(&slot, &reg.get("h").unwrap()));
    }

    #[test]
    fn push_checks_type() {
        let slot = RepoSlot::new(caps()).unwrap();
        let wrong = Caps::Tensor(TensorSpec::of([4, 1, 1, 1], DataType::U8));
        let b = Buffer::new(Arc::new(wrong), Payload::zeroed(4), 0).unwrap();
        assert!(matches!(slot.push(b), Err(FlowError::SpecMismatch(_))));
    }

    #[test]
    fn pull_is_never_older_than_last_push() {
        let slot = Arc::new(RepoSlot::new(caps()).unwrap());
        let writer = {
            let slot = slot.clone();
            std::thread::spawn(move || {
                for k in 1..=500u64 {
                    let b = Buffer::new(Arc::new(caps()), Payload::zeroed(16), k).unwrap();
                    slot.push(b).unwrap();
                }
            })
        };
        let mut last = 0;
        for _ in 0..500 {
            let pts = slot.pull().pts;
            assert!(pts >= last);
            last = pts;
        }
        writer.join().unwrap();
        assert_eq!(slot.pull().pts, 500);
    }
}
