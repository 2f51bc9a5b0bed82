//! Media and byte streams to tensor streams.

use std::sync::Arc;

use crate::element::props::{check_dim, check_dtype};
use crate::element::{
    ConfigError, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext, Negotiation,
    NegotiationError, PadDirection, PadTemplate, PropKind, PropSpec, Properties, StaticFactory,
};
use crate::runtime::Outputs;
use crate::tensor::{Buffer, Caps, DataType, Framerate, Payload, TensorDim, TensorSpec, VideoFormat};

use super::TransformError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Video { width: u32, height: u32, channels: u32 },
    Audio { channels: u32, dtype: DataType },
    Text,
    Binary,
}

/// How raw frames become tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConverterConfig {
    pub input: InputKind,
    /// Required for binary input; the fixed frame width for text.
    pub declared: Option<TensorSpec>,
}

impl ConverterConfig {
    pub fn video(width: u32, height: u32, channels: u32) -> Self {
        ConverterConfig {
            input: InputKind::Video {
                width,
                height,
                channels,
            },
            declared: None,
        }
    }

    pub fn binary(spec: TensorSpec) -> Self {
        ConverterConfig {
            input: InputKind::Binary,
            declared: Some(spec),
        }
    }

    /// The tensor type produced from one raw frame of `len` bytes, if fixed.
    pub fn output_spec(&self, len: Option<usize>) -> Result<TensorSpec, TransformError> {
        match self.input {
            InputKind::Video {
                width,
                height,
                channels,
            } => {
                if VideoFormat::from_channels(channels).is_none() {
                    return Err(TransformError::SpecMismatch(format!(
                        "video needs 1, 3 or 4 channels, got {channels}"
                    )));
                }
                Ok(TensorSpec::new(
                    TensorDim::new([channels, width, height, 1])?,
                    DataType::U8,
                    Framerate::WILDCARD,
                ))
            }
            InputKind::Audio { channels, dtype } => {
                let len = len.ok_or_else(|| TransformError::SpecMismatch("audio needs a block size".into()))?;
                let per = channels as usize * dtype.width();
                if len == 0 || len % per != 0 {
                    return Err(TransformError::LengthMismatch {
                        expected: per,
                        actual: len,
                    });
                }
                let samples = u32::try_from(len / per).unwrap_or(u32::MAX);
                Ok(TensorSpec::new(TensorDim::new([channels, samples, 1, 1])?, dtype, Framerate::WILDCARD))
            }
            InputKind::Text => self.declared.ok_or_else(|| {
                TransformError::SpecMismatch("text input needs dim= to fix the frame width".into())
            }),
            InputKind::Binary => self.declared.ok_or_else(|| {
                TransformError::SpecMismatch("binary input needs dim= and type=".into())
            }),
        }
    }
}

/// Wraps one raw frame as a tensor frame. Video, audio and binary frames
/// are relabelled without copying; text is padded with zeros or truncated
/// to the declared width.
pub fn convert(raw: &Buffer, cfg: &ConverterConfig) -> Result<Buffer, TransformError> {
    let len = raw.total_len();
    if len == 0 {
        return Err(TransformError::LengthMismatch {
            expected: cfg.output_spec(None).map(|s| s.byte_size()).unwrap_or(1),
            actual: 0,
        });
    }
    let spec = cfg.output_spec(Some(len))?.with_rate(raw.caps().framerate());
    relabel_or_fit(raw, cfg.input, Arc::new(Caps::Tensor(spec)))
}

fn relabel_or_fit(raw: &Buffer, input: InputKind, caps: Arc<Caps>) -> Result<Buffer, TransformError> {
    let want = caps.byte_size().expect("tensor caps");
    let len = raw.total_len();
    if input == InputKind::Text {
        if len == want {
            return Ok(raw.clone().relabel(caps)?);
        }
        let mut bytes = raw.bytes().to_vec();
        bytes.resize(want, 0);
        return Ok(Buffer::new(caps, Payload::from_vec(bytes), raw.pts)?.with_seq(raw.seq));
    }
    if len != want || raw.memories().len() != 1 {
        return Err(TransformError::LengthMismatch {
            expected: want,
            actual: len,
        });
    }
    Ok(raw.clone().relabel(caps)?)
}

#[derive(Debug)]
struct ConverterProps {
    input: Option<String>,
    declared_dim: Option<TensorDim>,
    declared_type: Option<DataType>,
    width: Option<u32>,
    height: Option<u32>,
    channels: Option<u32>,
}

impl ConverterProps {
    fn from(props: &Properties) -> Result<Self, ConfigError> {
        let parse_err = |e: crate::tensor::SpecError| ConfigError::BadProperty(e.to_string());
        let u = |k: &str| props.int(k).map(|v| v as u32);
        Ok(ConverterProps {
            input: props.str("input").map(str::to_string),
            declared_dim: props.str("dim").map(str::parse).transpose().map_err(parse_err)?,
            declared_type: props.str("type").map(str::parse).transpose().map_err(parse_err)?,
            width: u("width"),
            height: u("height"),
            channels: u("channels"),
        })
    }

    /// Resolves the conversion for a concrete input type.
    fn config_for(&self, caps: &Caps) -> Result<ConverterConfig, String> {
        let declared = match (self.declared_dim, self.declared_type) {
            (Some(d), Some(t)) => Some(TensorSpec::new(d, t, Framerate::WILDCARD)),
            (Some(d), None) => Some(TensorSpec::new(d, DataType::U8, Framerate::WILDCARD)),
            (None, Some(_)) => return Err("type= needs dim= as well".into()),
            (None, None) => None,
        };
        let kind = self.input.as_deref();
        let cfg = match (caps, kind) {
            (Caps::Video(v), None | Some("video")) => ConverterConfig::video(v.width, v.height, v.format.channels()),
            (Caps::Audio(a), None | Some("audio")) => ConverterConfig {
                input: InputKind::Audio {
                    channels: a.channels,
                    dtype: a.format.dtype(),
                },
                declared: None,
            },
            (Caps::Text { .. }, None | Some("text")) => ConverterConfig {
                input: InputKind::Text,
                declared: declared.map(|d| TensorSpec::new(d.dim, DataType::U8, d.framerate)),
            },
            (Caps::Octet { .. }, Some("video")) => match (self.width, self.height) {
                (Some(w), Some(h)) => ConverterConfig::video(w, h, self.channels.unwrap_or(3)),
                _ => return Err("input=video over bytes needs width= and height=".into()),
            },
            (Caps::Octet { .. }, None | Some("binary")) => {
                if self.declared_dim.is_none() || self.declared_type.is_none() {
                    return Err("binary input needs both dim= and type=".into());
                }
                ConverterConfig {
                    input: InputKind::Binary,
                    declared,
                }
            }
            (Caps::Tensor(s), None) => ConverterConfig::binary(declared.unwrap_or(*s)),
            (c, k) => return Err(format!("cannot convert {c} as {}", k.unwrap_or("auto"))),
        };
        Ok(cfg)
    }
}

struct Converter {
    cfg: ConverterConfig,
    caps: Arc<Caps>,
}

impl Element for Converter {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let b = match self.cfg.input {
            InputKind::Audio { .. } => convert(&buffer, &self.cfg)?.relabel(self.caps.clone())?,
            input => relabel_or_fit(&buffer, input, self.caps.clone())?,
        };
        out.push(0, b)
    }
}

impl ElementConfig for ConverterProps {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        let input = n.single_input();
        let cfg = self.config_for(input).map_err(|m| NegotiationError::on_pad("sink", m))?;
        let fixed = input.byte_size();
        let spec = cfg
            .output_spec(fixed)
            .map_err(|e| NegotiationError::on_pad("sink", e.to_string()))?;
        if let (Some(have), InputKind::Binary) = (fixed, cfg.input) {
            if have != spec.byte_size() {
                return Err(NegotiationError::on_pad(
                    "sink",
                    format!("{input} frames are {have} bytes but {spec:?} needs {}", spec.byte_size()),
                ));
            }
        }
        Ok(vec![Caps::Tensor(spec.with_rate(input.framerate()))])
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let cfg = self.config_for(&cx.pads.sinks[0].1).map_err(ElementError::Other)?;
        Ok(Instance::chain(Converter {
            cfg,
            caps: Arc::new(cx.pads.srcs[0].1.clone()),
        }))
    }
}

fn check_input(raw: &str) -> Result<(), String> {
    match raw {
        "video" | "audio" | "text" | "binary" => Ok(()),
        _ => Err(format!("input must be video, audio, text or binary, got '{raw}'")),
    }
}

const EXTENT: PropKind = PropKind::Int {
    min: 1,
    max: crate::tensor::MAX_EXTENT as i64,
};

pub(crate) const CONVERTER: StaticFactory = StaticFactory {
    kind: "tensor_converter",
    aliases: &[],
    description: "Turns video, audio, text or byte streams into tensor streams",
    properties: &[
        PropSpec::new("input", PropKind::Checked(check_input), "video, audio, text or binary; default from the input type"),
        PropSpec::new("dim", PropKind::Checked(check_dim), "tensor dimension for binary or text input")
            .aliases(&["input-dim"]),
        PropSpec::new("type", PropKind::Checked(check_dtype), "element type for binary input")
            .aliases(&["input-type"]),
        PropSpec::new("width", EXTENT, "frame width for input=video over bytes"),
        PropSpec::new("height", EXTENT, "frame height for input=video over bytes"),
        PropSpec::new("channels", PropKind::Int { min: 1, max: 4 }, "channels for input=video over bytes"),
    ],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "video/x-raw; audio/x-raw; text/x-raw; application/octet-stream"),
        PadTemplate::always("src", PadDirection::Src, "other/tensor"),
    ],
    configure: |props, _| Ok(Arc::new(ConverterProps::from(props)?)),
};
