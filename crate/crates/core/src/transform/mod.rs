//! Converters into tensor streams, tensor operators and decoders back out.

mod chain;
mod convert;
mod decode;

use std::sync::Arc;

use thiserror::Error;

use crate::element::{
    ConfigError, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext, Negotiation,
    NegotiationError, PadDirection, PadTemplate, PropKind, PropSpec, StaticFactory,
};
use crate::runtime::Outputs;
use crate::tensor::{Buffer, Caps, Payload, SpecError, TensorSpec};

pub use chain::{resize_nn, transform, Step, TransformChain, STD_EPSILON};
pub use convert::{convert, ConverterConfig, InputKind};
pub use decode::{argmax, decode, DecoderConfig};

pub(crate) use convert::CONVERTER;
pub(crate) use chain::write_f64;
pub(crate) use decode::{DECODER, VIDEOSCALE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("LengthMismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("ChainSpecError: {0}")]
    ChainSpecError(String),
    #[error("UnsupportedDtype: {0}")]
    UnsupportedDtype(String),
    #[error("SpecMismatch: {0}")]
    SpecMismatch(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug)]
struct TransformConfig {
    chain: TransformChain,
}

struct Transform {
    chain: TransformChain,
    input: TensorSpec,
    caps: Arc<Caps>,
}

impl Element for Transform {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let (_, bytes) = self.chain.apply_bytes(&self.input, buffer.bytes())?;
        let b = Buffer::new(self.caps.clone(), Payload::from_vec(bytes), buffer.pts)?.with_seq(buffer.seq);
        out.push(0, b)
    }
}

impl ElementConfig for TransformConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        let input = n.single_input();
        let spec = input
            .as_tensor()
            .ok_or_else(|| NegotiationError::on_pad("sink", format!("tensor_transform needs other/tensor, got {input}")))?;
        let out = self
            .chain
            .output_spec(spec)
            .map_err(|e| NegotiationError::on_pad("sink", e.to_string()))?;
        Ok(vec![Caps::Tensor(out)])
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let input = *cx.pads.sinks[0]
            .1
            .as_tensor()
            .ok_or_else(|| ElementError::Other("tensor_transform input is not a tensor".into()))?;
        Ok(Instance::chain(Transform {
            chain: self.chain.clone(),
            input,
            caps: Arc::new(cx.pads.srcs[0].1.clone()),
        }))
    }
}

fn check_mode(raw: &str) -> Result<(), String> {
    match raw {
        "arithmetic" | "arith" | "chain" | "typecast" | "transpose" | "stand" | "standardize" | "normalize"
        | "resize" => Ok(()),
        _ => Err(format!("unknown transform mode '{raw}'")),
    }
}

pub(crate) const TRANSFORM: StaticFactory = StaticFactory {
    kind: "tensor_transform",
    aliases: &["tensor_trans"],
    description: "Applies typecast, arithmetic, transpose, standardize, normalize or resize to each frame",
    properties: &[
        PropSpec::new(
            "mode",
            PropKind::Checked(check_mode),
            "arithmetic, typecast, transpose, stand, normalize or resize",
        )
        .required(),
        PropSpec::new("option", PropKind::Str, "mode argument, e.g. typecast:float32,add:-127.5 or 0:2:1:3"),
    ],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "other/tensor"),
        PadTemplate::always("src", PadDirection::Src, "other/tensor"),
    ],
    configure: |props, _| {
        let chain = TransformChain::from_mode(props.str("mode").unwrap_or_default(), props.str("option"))
            .map_err(|e| ConfigError::BadProperty(e.to_string()))?;
        Ok(Arc::new(TransformConfig { chain }))
    },
};
