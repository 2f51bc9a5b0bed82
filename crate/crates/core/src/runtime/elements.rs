//! Path-control elements owned by the runtime: tee, valve, input selector
//! and capsfilter.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use crate::element::props::check_caps_filter;
use crate::element::{
    pad_index, ConfigError, Control, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext,
    Negotiation, NegotiationError, PadDirection, PadTemplate, PropKind, PropSpec, StaticFactory,
};
use crate::tensor::{Buffer, Caps, CapsFilter, ClockTime};

use super::Outputs;

fn passthrough(n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
    Ok(vec![n.single_input().clone(); n.srcs.len()])
}

// tee

#[derive(Debug)]
struct TeeConfig;

struct Tee;

impl Element for Tee {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        out.push_all(buffer)
    }
}

impl ElementConfig for TeeConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        passthrough(n)
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        Ok(Instance::chain(Tee))
    }
}

pub(crate) const TEE: StaticFactory = StaticFactory {
    kind: "tee",
    aliases: &[],
    description: "Shares every buffer with each linked branch without copying",
    properties: &[],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "ANY"),
        PadTemplate::request("src_%u", PadDirection::Src, "ANY"),
    ],
    configure: |_, _| Ok(Arc::new(TeeConfig)),
};

// valve

#[derive(Debug)]
struct ValveConfig {
    drop: bool,
}

struct ValveControl {
    drop: AtomicBool,
}

impl Control for ValveControl {
    fn set_property(&self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "drop" => {
                let v = VALVE_PROPS[0].parse_value(value)?;
                self.drop.store(v == crate::element::PropValue::Bool(true), Ordering::SeqCst);
                Ok(())
            }
            _ => Err(format!("valve has no runtime property '{key}'")),
        }
    }

    fn get_property(&self, key: &str) -> Option<String> {
        (key == "drop").then(|| self.drop.load(Ordering::SeqCst).to_string())
    }
}

struct Valve {
    control: Arc<ValveControl>,
}

impl Element for Valve {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        if self.control.drop.load(Ordering::SeqCst) {
            out.record_drop();
            Ok(Flow::Ok)
        } else {
            out.push(0, buffer)
        }
    }
}

impl ElementConfig for ValveConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        passthrough(n)
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let control = Arc::new(ValveControl {
            drop: AtomicBool::new(self.drop),
        });
        Ok(Instance::chain(Valve {
            control: control.clone(),
        })
        .with_control(control))
    }
}

const VALVE_PROPS: &[PropSpec] =
    &[PropSpec::new("drop", PropKind::Bool, "discard every buffer while true").default("false")];

pub(crate) const VALVE: StaticFactory = StaticFactory {
    kind: "valve",
    aliases: &[],
    description: "Passes or discards buffers; switchable while running",
    properties: VALVE_PROPS,
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "ANY"),
        PadTemplate::always("src", PadDirection::Src, "ANY"),
    ],
    configure: |props, _| {
        Ok(Arc::new(ValveConfig {
            drop: props.bool("drop").unwrap_or(false),
        }))
    },
};

// input selector

#[derive(Debug)]
struct SelectorConfig {
    active: String,
}

struct SelectorControl {
    pads: Vec<String>,
    active: AtomicUsize,
}

impl Control for SelectorControl {
    fn set_property(&self, key: &str, value: &str) -> Result<(), String> {
        if key != "active-pad" {
            return Err(format!("input_selector has no runtime property '{key}'"));
        }
        let idx = self
            .pads
            .iter()
            .position(|p| p == value)
            .ok_or_else(|| format!("UnknownPad: '{value}' is not a linked sink pad"))?;
        self.active.store(idx, Ordering::SeqCst);
        Ok(())
    }

    fn get_property(&self, key: &str) -> Option<String> {
        (key == "active-pad").then(|| self.pads[self.active.load(Ordering::SeqCst)].clone())
    }
}

struct Selector {
    control: Arc<SelectorControl>,
    seq: u64,
    last_pts: ClockTime,
}

impl Element for Selector {
    fn chain(&mut self, pad: usize, mut buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        if pad != self.control.active.load(Ordering::SeqCst) {
            out.record_drop();
            return Ok(Flow::Ok);
        }
        // Sources switch mid-stream; keep the output pad's stamps monotone.
        buffer.pts = buffer.pts.max(self.last_pts);
        self.last_pts = buffer.pts;
        buffer.seq = self.seq;
        self.seq += 1;
        out.push(0, buffer)
    }

    fn eos(&mut self, pad: usize, out: &mut Outputs<'_>) -> Result<(), ElementError> {
        if pad == self.control.active.load(Ordering::SeqCst) || out.all_inputs_eos() {
            out.push_eos_all()?;
        }
        Ok(())
    }
}

impl ElementConfig for SelectorConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        let first = n.single_input();
        for (pad, caps) in &n.sinks[1..] {
            if !caps.is_compatible(first) {
                return Err(NegotiationError::on_pad(
                    pad,
                    format!("{caps} differs from {first} on {}", n.sinks[0].0),
                ));
            }
        }
        let rate = n
            .sinks
            .iter()
            .fold(first.framerate(), |r, (_, c)| r.max_concrete(c.framerate()));
        let out = if n.sinks.iter().all(|(_, c)| c.framerate() == rate) {
            first.clone()
        } else {
            first.with_framerate(crate::tensor::Framerate::WILDCARD)
        };
        Ok(vec![out])
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let pads: Vec<String> = cx.pads.sinks.iter().map(|(p, _)| p.clone()).collect();
        let active = pads.iter().position(|p| *p == self.active).ok_or_else(|| {
            ElementError::Other(format!("UnknownPad: active-pad '{}' is not a linked sink pad", self.active))
        })?;
        let control = Arc::new(SelectorControl {
            pads,
            active: AtomicUsize::new(active),
        });
        Ok(Instance::chain(Selector {
            control: control.clone(),
            seq: 0,
            last_pts: 0,
        })
        .with_control(control))
    }
}

fn check_pad_name(raw: &str) -> Result<(), String> {
    if raw.starts_with("sink_") && pad_index(raw).is_some() {
        Ok(())
    } else {
        Err(format!("'{raw}' is not a sink pad name"))
    }
}

pub(crate) const INPUT_SELECTOR: StaticFactory = StaticFactory {
    kind: "input_selector",
    aliases: &["switch", "input-selector"],
    description: "Forwards buffers from one selected sink pad",
    properties: &[PropSpec::new("active-pad", PropKind::Checked(check_pad_name), "sink pad to forward")
        .default("sink_0")],
    pads: &[
        PadTemplate::request("sink_%u", PadDirection::Sink, "ANY"),
        PadTemplate::always("src", PadDirection::Src, "ANY"),
    ],
    configure: |props, _| {
        Ok(Arc::new(SelectorConfig {
            active: props.str("active-pad").unwrap_or("sink_0").to_string(),
        }))
    },
};

// capsfilter

#[derive(Debug)]
struct CapsFilterConfig {
    filter: CapsFilter,
}

struct PassThrough;

impl Element for PassThrough {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        out.push(0, buffer)
    }
}

impl ElementConfig for CapsFilterConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        let input = n.single_input();
        if !self.filter.accepts(input) {
            return Err(NegotiationError::on_pad(
                "sink",
                format!("{input} does not satisfy {}", self.filter),
            ));
        }
        Ok(vec![input.clone()])
    }

    fn sink_constraint(&self, _: &str) -> Option<CapsFilter> {
        Some(self.filter.clone())
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        Ok(Instance::chain(PassThrough))
    }
}

pub(crate) const CAPSFILTER: StaticFactory = StaticFactory {
    kind: "capsfilter",
    aliases: &[],
    description: "Constrains the stream type on a link",
    properties: &[PropSpec::new("caps", PropKind::Checked(check_caps_filter), "required stream type").required()],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "ANY"),
        PadTemplate::always("src", PadDirection::Src, "ANY"),
    ],
    configure: |props, _| {
        let filter = props
            .str("caps")
            .unwrap_or_default()
            .parse()
            .map_err(|e: crate::tensor::SpecError| ConfigError::BadProperty(e.to_string()))?;
        Ok(Arc::new(CapsFilterConfig { filter }))
    },
};
