use std::sync::Arc;

use crate::element::{Element, ElementError, Flow};
use crate::tensor::Buffer;

/// Where an element's source pads lead.
pub trait OutputSink {
    fn push(&mut self, pad: usize, buffer: Buffer) -> Result<Flow, ElementError>;
    fn push_eos(&mut self, pad: usize) -> Result<(), ElementError>;
    /// Counts a frame the element discarded on purpose.
    fn record_drop(&mut self);
}

/// An element's view of its source pads during one call.
pub struct Outputs<'a> {
    sink: &'a mut dyn OutputSink,
    src_pads: usize,
    inputs_eos: &'a [bool],
}

impl<'a> Outputs<'a> {
    pub fn new(sink: &'a mut dyn OutputSink, src_pads: usize, inputs_eos: &'a [bool]) -> Self {
        Outputs {
            sink,
            src_pads,
            inputs_eos,
        }
    }

    pub fn src_count(&self) -> usize {
        self.src_pads
    }

    pub fn push(&mut self, pad: usize, buffer: Buffer) -> Result<Flow, ElementError> {
        self.sink.push(pad, buffer)
    }

    /// Pushes a shared handle of `buffer` to every source pad. Returns
    /// `Flow::Eos` only once every branch has finished.
    pub fn push_all(&mut self, buffer: Buffer) -> Result<Flow, ElementError> {
        let mut flow = Flow::Eos;
        for pad in 0..self.src_pads {
            flow = flow.and(self.sink.push(pad, buffer.clone())?);
        }
        Ok(flow)
    }

    pub fn push_eos(&mut self, pad: usize) -> Result<(), ElementError> {
        self.sink.push_eos(pad)
    }

    pub fn push_eos_all(&mut self) -> Result<(), ElementError> {
        for pad in 0..self.src_pads {
            self.sink.push_eos(pad)?;
        }
        Ok(())
    }

    pub fn record_drop(&mut self) {
        self.sink.record_drop();
    }

    pub fn input_eos(&self, pad: usize) -> bool {
        self.inputs_eos.get(pad).copied().unwrap_or(false)
    }

    pub fn all_inputs_eos(&self) -> bool {
        self.inputs_eos.iter().all(|e| *e)
    }
}

/// An [`OutputSink`] that records everything, for driving an element
/// directly without a pipeline.
#[derive(Debug, Default)]
pub struct Capture {
    pub buffers: Vec<(usize, Buffer)>,
    pub eos: Vec<usize>,
    pub drops: u64,
    /// Pads that answer `Flow::Eos`.
    pub closed: Vec<usize>,
}

impl Capture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_pad(&self, pad: usize) -> Vec<&Buffer> {
        self.buffers.iter().filter(|(p, _)| *p == pad).map(|(_, b)| b).collect()
    }
}

impl OutputSink for Capture {
    fn push(&mut self, pad: usize, buffer: Buffer) -> Result<Flow, ElementError> {
        self.buffers.push((pad, buffer));
        Ok(if self.closed.contains(&pad) { Flow::Eos } else { Flow::Ok })
    }

    fn push_eos(&mut self, pad: usize) -> Result<(), ElementError> {
        self.eos.push(pad);
        Ok(())
    }

    fn record_drop(&mut self) {
        self.drops += 1;
    }
}

/// Drives a chain element by hand: feeds buffers and EOS on given sink pads
/// and collects what comes out.
pub struct Harness {
    element: Box<dyn Element>,
    src_pads: usize,
    inputs_eos: Vec<bool>,
    pub capture: Capture,
}

impl Harness {
    pub fn new(element: Box<dyn Element>, sink_pads: usize, src_pads: usize) -> Self {
        Harness {
            element,
            src_pads,
            inputs_eos: vec![false; sink_pads],
            capture: Capture::new(),
        }
    }

    /// Instantiates `config` with the given pad layout and wraps the chain element.
    pub fn from_config(
        config: &Arc<dyn crate::element::ElementConfig>,
        pads: &crate::element::PadLayout,
    ) -> Result<Self, ElementError> {
        let repos = crate::flow::RepoRegistry::new();
        let cx = crate::element::InstanceContext {
            name: "harness",
            pads,
            repos: &repos,
        };
        match config.instantiate(&cx)?.runner {
            crate::element::Runner::Chain(e) => Ok(Harness::new(e, pads.sinks.len(), pads.srcs.len())),
            _ => Err(ElementError::Other("not a chain element".into())),
        }
    }

    pub fn push(&mut self, pad: usize, buffer: Buffer) -> Result<Flow, ElementError> {
        let mut out = Outputs::new(&mut self.capture, self.src_pads, &self.inputs_eos);
        self.element.chain(pad, buffer, &mut out)
    }

    pub fn eos(&mut self, pad: usize) -> Result<(), ElementError> {
        self.inputs_eos[pad] = true;
        let mut out = Outputs::new(&mut self.capture, self.src_pads, &self.inputs_eos);
        self.element.eos(pad, &mut out)
    }

    pub fn take(&mut self) -> Vec<(usize, Buffer)> {
        std::mem::take(&mut self.capture.buffers)
    }
}
