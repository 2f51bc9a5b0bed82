//! The `tensor_filter` element and its framework plug-in interface.

mod custom;
mod toy;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::element::{
    ConfigError, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext, Negotiation,
    NegotiationError, PadDirection, PadTemplate, PropKind, PropSpec, StaticFactory,
};
use crate::runtime::Outputs;
use crate::tensor::{Buffer, Caps, Payload};

pub use custom::{CustomFramework, FnModel};
pub use toy::{Layer, ToyFramework, ToyModel, TOY_MAGIC};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("DuplicateFramework: '{0}' is already registered")]
    DuplicateFramework(String),
    #[error("FormatError: {0}")]
    FormatError(String),
    #[error("DimOverflow: {0}")]
    DimOverflow(String),
    #[error("PluginFailure: {0}")]
    PluginFailure(String),
    #[error("SpecViolation: {0}")]
    SpecViolation(String),
    #[error("UnknownModel: {0}")]
    UnknownModel(String),
    #[error("cannot read model {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A neural network framework: turns a model locator into a runnable model.
pub trait FilterPlugin: Send + Sync {
    fn framework_name(&self) -> &str;

    fn open(&self, model: &str) -> Result<Arc<dyn FilterModel>, FilterError>;
}

/// A loaded model. Stateless between invocations.
pub trait FilterModel: Send + Sync + fmt::Debug {
    /// Output type for a given input type. Deterministic.
    fn query_io(&self, input: &Caps) -> Result<Caps, FilterError>;

    /// Runs one frame. Returns one memory per output tensor.
    fn invoke(&self, input: &Buffer, output: &Caps) -> Result<Vec<Payload>, FilterError>;
}

/// A model bound to its framework and to a negotiated input type.
#[derive(Clone)]
pub struct ModelHandle {
    framework: String,
    locator: String,
    model: Arc<dyn FilterModel>,
    input: Caps,
    output: Arc<Caps>,
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle")
            .field("framework", &self.framework)
            .field("model", &self.locator)
            .field("input", &self.input)
            .field("output", &self.output)
            .finish()
    }
}

impl ModelHandle {
    pub fn open(plugin: &dyn FilterPlugin, locator: &str, input: &Caps) -> Result<Self, FilterError> {
        let model = plugin.open(locator)?;
        Self::bind(plugin.framework_name(), locator, model, input)
    }

    fn bind(framework: &str, locator: &str, model: Arc<dyn FilterModel>, input: &Caps) -> Result<Self, FilterError> {
        let output = model.query_io(input)?;
        Ok(ModelHandle {
            framework: framework.to_string(),
            locator: locator.to_string(),
            model,
            input: input.clone(),
            output: Arc::new(output),
        })
    }

    pub fn framework(&self) -> &str {
        &self.framework
    }

    pub fn locator(&self) -> &str {
        &self.locator
    }

    pub fn input(&self) -> &Caps {
        &self.input
    }

    pub fn output(&self) -> &Caps {
        &self.output
    }

    /// Runs the model on one buffer, checking the result against the
    /// negotiated output type. Stamp and sequence number are kept.
    pub fn invoke(&self, input: &Buffer) -> Result<Buffer, FilterError> {
        if !input.caps().is_compatible(&self.input) {
            return Err(FilterError::SpecViolation(format!(
                "input {} does not match negotiated {}",
                input.caps(),
                self.input
            )));
        }
        let memories = self.model.invoke(input, &self.output)?;
        let sizes = self.output.memory_sizes().unwrap_or_default();
        let got: Vec<usize> = memories.iter().map(Payload::len).collect();
        if got != sizes {
            return Err(FilterError::SpecViolation(format!(
                "{} model '{}' returned memories of {got:?} bytes, {} needs {sizes:?}",
                self.framework, self.locator, self.output
            )));
        }
        let b = Buffer::from_memories(self.output.clone(), memories, input.pts)
            .map_err(|e| FilterError::SpecViolation(e.to_string()))?;
        Ok(b.with_seq(input.seq))
    }
}

#[derive(Debug)]
struct FilterConfig {
    framework: String,
    locator: String,
    model: Arc<dyn FilterModel>,
}

struct Filter {
    handle: ModelHandle,
}

impl Element for Filter {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let b = self.handle.invoke(&buffer)?;
        out.push(0, b)
    }
}

impl ElementConfig for FilterConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        let input = n.single_input();
        let out = self
            .model
            .query_io(input)
            .map_err(|e| NegotiationError::on_pad("sink", e.to_string()))?;
        Ok(vec![out.with_framerate(input.framerate())])
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let mut handle = ModelHandle::bind(&self.framework, &self.locator, self.model.clone(), &cx.pads.sinks[0].1)?;
        handle.output = Arc::new(cx.pads.srcs[0].1.clone());
        Ok(Instance::chain(Filter { handle }))
    }
}

pub(crate) const FILTER: StaticFactory = StaticFactory {
    kind: "tensor_filter",
    aliases: &[],
    description: "Runs a model of a registered framework on every frame",
    properties: &[
        PropSpec::new("framework", PropKind::Str, "registered framework name")
            .aliases(&["frame"])
            .required(),
        PropSpec::new("model", PropKind::Str, "model path or registry key")
            .aliases(&["m"])
            .required(),
    ],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "other/tensor; other/tensors"),
        PadTemplate::always("src", PadDirection::Src, "other/tensor; other/tensors"),
    ],
    configure: |props, registry| {
        let framework = props.str("framework").unwrap_or_default();
        let plugin = registry
            .framework(framework)
            .ok_or_else(|| ConfigError::UnknownFramework(framework.to_string()))?;
        let locator = props.str("model").unwrap_or_default();
        let model = plugin
            .open(locator)
            .map_err(|e| ConfigError::BadProperty(format!("model '{locator}': {e}")))?;
        Ok(Arc::new(FilterConfig {
            framework: framework.to_string(),
            locator: locator.to_string(),
            model,
        }))
    },
};
