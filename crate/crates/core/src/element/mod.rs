//! The element object model.
//!
//! An element kind is described by an [`ElementFactory`]: its properties,
//! its pad templates, and how to turn property values into a validated
//! [`ElementConfig`]. A config negotiates stream types for its source pads
//! from the types arriving on its sink pads, and instantiates the runtime
//! object ([`Element`] for chain-driven elements, [`Source`] for elements
//! that produce on their own thread).

pub mod props;

use std::any::Any;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::filter::FilterError;
use crate::flow::FlowError;
use crate::io::IoError;
use crate::registry::Registry;
use crate::runtime::{Outputs, QueuePolicy, RepoRegistry};
use crate::tensor::{Buffer, Caps, CapsFilter, ClockTime, SpecError};
use crate::transform::TransformError;

pub use props::{PropKind, PropSpec, PropValue, Properties};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PadDirection {
    Src,
    Sink,
}

impl fmt::Display for PadDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PadDirection::Src => "src",
            PadDirection::Sink => "sink",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadPresence {
    Always,
    /// Created on demand; names follow the template with `%u` replaced.
    Request,
}

#[derive(Debug, Clone, Copy)]
pub struct PadTemplate {
    pub name: &'static str,
    pub direction: PadDirection,
    pub presence: PadPresence,
    /// Human-readable description of accepted types.
    pub caps: &'static str,
}

impl PadTemplate {
    pub const fn always(name: &'static str, direction: PadDirection, caps: &'static str) -> Self {
        PadTemplate {
            name,
            direction,
            presence: PadPresence::Always,
            caps,
        }
    }

    pub const fn request(name: &'static str, direction: PadDirection, caps: &'static str) -> Self {
        PadTemplate {
            name,
            direction,
            presence: PadPresence::Request,
            caps,
        }
    }

    /// Whether `pad` is an instance of this template.
    pub fn matches(&self, pad: &str) -> bool {
        match self.presence {
            PadPresence::Always => self.name == pad,
            PadPresence::Request => match self.name.strip_suffix("%u") {
                Some(prefix) => pad
                    .strip_prefix(prefix)
                    .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit())),
                None => self.name == pad,
            },
        }
    }

    pub fn instance_name(&self, index: usize) -> String {
        self.name.replace("%u", &index.to_string())
    }
}

/// Numeric suffix of a request pad name (`sink_3` -> 3).
pub fn pad_index(name: &str) -> Option<usize> {
    name.rsplit_once('_').and_then(|(_, n)| n.parse().ok())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    BadProperty(String),
    #[error("filter framework '{0}' is not registered")]
    UnknownFramework(String),
}

/// Inputs to negotiation for one element.
#[derive(Debug)]
pub struct Negotiation<'a> {
    /// Sink pad names with the types arriving on them, in pad order.
    pub sinks: &'a [(String, Caps)],
    /// Source pad names, in pad order.
    pub srcs: &'a [String],
    /// Constraint declared by the peer of each source pad, if any.
    pub downstream: &'a [Option<CapsFilter>],
}

impl Negotiation<'_> {
    pub fn single_input(&self) -> &Caps {
        &self.sinks[0].1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct NegotiationError {
    /// Sink pad the offending input arrived on, if attributable.
    pub pad: Option<String>,
    pub message: String,
}

impl NegotiationError {
    pub fn new(message: impl Into<String>) -> Self {
        NegotiationError {
            pad: None,
            message: message.into(),
        }
    }

    pub fn on_pad(pad: &str, message: impl Into<String>) -> Self {
        NegotiationError {
            pad: Some(pad.to_string()),
            message: message.into(),
        }
    }
}

/// Which side of a recurrence slot an element binds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepoRole {
    Sink,
    Src,
}

/// Pad names and negotiated types handed to an element at instantiation.
#[derive(Debug, Clone, Default)]
pub struct PadLayout {
    pub sinks: Vec<(String, Caps)>,
    pub srcs: Vec<(String, Caps)>,
}

pub struct InstanceContext<'a> {
    pub name: &'a str,
    pub pads: &'a PadLayout,
    pub repos: &'a RepoRegistry,
}

/// A validated element configuration.
pub trait ElementConfig: Send + Sync + fmt::Debug {
    /// Output types for each source pad given the input types.
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError>;

    /// A constraint this element places on what may arrive at `pad`.
    fn sink_constraint(&self, _pad: &str) -> Option<CapsFilter> {
        None
    }

    /// Pads that exist because of configuration rather than the templates.
    fn extra_pads(&self) -> Vec<(String, PadDirection)> {
        Vec::new()
    }

    fn repo_binding(&self) -> Option<(RepoRole, String, Option<Caps>)> {
        None
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError>;
}

pub trait ElementFactory: Send + Sync {
    fn kind(&self) -> &'static str;
    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }
    fn description(&self) -> &'static str;
    fn properties(&self) -> &'static [PropSpec];
    fn pad_templates(&self) -> &'static [PadTemplate];
    fn configure(
        &self,
        props: &Properties,
        registry: &Registry,
    ) -> Result<Arc<dyn ElementConfig>, ConfigError>;

    fn property(&self, key: &str) -> Option<&'static PropSpec> {
        self.properties().iter().find(|p| p.matches(key))
    }
}

pub type ConfigureFn = fn(&Properties, &Registry) -> Result<Arc<dyn ElementConfig>, ConfigError>;

/// A factory described entirely by static tables and a configure function.
#[derive(Clone, Copy)]
pub struct StaticFactory {
    pub kind: &'static str,
    pub aliases: &'static [&'static str],
    pub description: &'static str,
    pub properties: &'static [PropSpec],
    pub pads: &'static [PadTemplate],
    pub configure: ConfigureFn,
}

impl ElementFactory for StaticFactory {
    fn kind(&self) -> &'static str {
        self.kind
    }

    fn aliases(&self) -> &'static [&'static str] {
        self.aliases
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn properties(&self) -> &'static [PropSpec] {
        self.properties
    }

    fn pad_templates(&self) -> &'static [PadTemplate] {
        self.pads
    }

    fn configure(&self, props: &Properties, registry: &Registry) -> Result<Arc<dyn ElementConfig>, ConfigError> {
        (self.configure)(props, registry)
    }
}

/// Downstream acceptance of a pushed item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Ok,
    /// Downstream has finished; upstream should stop producing.
    Eos,
}

impl Flow {
    pub fn and(self, other: Flow) -> Flow {
        if self == Flow::Ok || other == Flow::Ok {
            Flow::Ok
        } else {
            Flow::Eos
        }
    }
}

#[derive(Debug, Error)]
pub enum ElementError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Other(String),
    /// An element further downstream failed; the error was recorded there.
    #[error("downstream element failed")]
    Downstream,
}

/// A chain-driven element. Never re-entered concurrently.
pub trait Element: Send {
    /// Handles a buffer arriving on sink pad `pad`.
    fn chain(&mut self, pad: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError>;

    /// Handles end-of-stream on sink pad `pad`. By default EOS is forwarded
    /// on every source pad once all sink pads have seen it.
    fn eos(&mut self, _pad: usize, out: &mut Outputs<'_>) -> Result<(), ElementError> {
        if out.all_inputs_eos() {
            out.push_eos_all()?;
        }
        Ok(())
    }
}

pub enum Produced {
    /// A buffer, optionally paced to be pushed no earlier than `due`.
    Buffer { buffer: Buffer, due: Option<ClockTime> },
    /// Nothing available yet; ask again.
    Pending,
    Eos,
}

/// Clock access for sources.
pub trait SourceClock {
    /// Running time since the pipeline started, excluding paused periods.
    fn running_time(&self) -> ClockTime;
}

/// An element that produces buffers on its own thread.
pub trait Source: Send {
    fn produce(&mut self, clock: &dyn SourceClock) -> Result<Produced, ElementError>;
}

/// Properties that may be changed while the pipeline runs.
pub trait Control: Send + Sync {
    fn set_property(&self, key: &str, value: &str) -> Result<(), String>;
    fn get_property(&self, key: &str) -> Option<String>;
}

pub enum Runner {
    Source(Box<dyn Source>),
    Chain(Box<dyn Element>),
    Queue(QueuePolicy),
}

pub struct Instance {
    pub runner: Runner,
    pub control: Option<Arc<dyn Control>>,
    /// Application-facing handle (app sink iterator, counters, ...).
    pub handle: Option<Arc<dyn Any + Send + Sync>>,
    /// Called when the pipeline stops, to release anything blocked on the element.
    pub stop_hook: Option<Arc<dyn Fn() + Send + Sync>>,
}

impl Instance {
    pub fn chain(element: impl Element + 'static) -> Self {
        Instance {
            runner: Runner::Chain(Box::new(element)),
            control: None,
            handle: None,
            stop_hook: None,
        }
    }

    pub fn source(source: impl Source + 'static) -> Self {
        Instance {
            runner: Runner::Source(Box::new(source)),
            control: None,
            handle: None,
            stop_hook: None,
        }
    }

    pub fn with_control(mut self, control: Arc<dyn Control>) -> Self {
        self.control = Some(control);
        self
    }

    pub fn with_handle(mut self, handle: Arc<dyn Any + Send + Sync>) -> Self {
        self.handle = Some(handle);
        self
    }

    pub fn with_stop_hook(mut self, hook: Arc<dyn Fn() + Send + Sync>) -> Self {
        self.stop_hook = Some(hook);
        self
    }
}
