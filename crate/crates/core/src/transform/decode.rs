//! Tensor streams back to video or text, and raw video scaling.

use std::sync::Arc;

use crate::element::{
    ConfigError, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext, Negotiation,
    NegotiationError, PadDirection, PadTemplate, PropKind, PropSpec, StaticFactory,
};
use crate::runtime::Outputs;
use crate::tensor::{Buffer, Caps, DataType, Payload, VideoFormat, VideoInfo};

use super::chain::{read_f64, resize_nn};
use super::TransformError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecoderConfig {
    /// A uint8 `[channels, width, height, 1]` tensor as a raw video frame.
    DirectVideo,
    /// The label at the index of the largest element.
    ArgmaxLabel(Vec<String>),
}

impl DecoderConfig {
    pub fn output_caps(&self, input: &Caps) -> Result<Caps, TransformError> {
        let spec = input
            .as_tensor()
            .ok_or_else(|| TransformError::SpecMismatch(format!("decoder needs other/tensor, got {input}")))?;
        match self {
            DecoderConfig::DirectVideo => {
                let [c, w, h, n] = spec.dim.extents();
                let format = VideoFormat::from_channels(c).filter(|_| spec.dtype == DataType::U8 && n == 1);
                let format = format.ok_or_else(|| {
                    TransformError::SpecMismatch(format!(
                        "direct_video needs uint8 [1|3|4, w, h, 1], got {}",
                        crate::tensor::spec_to_string(input)
                    ))
                })?;
                Ok(Caps::Video(VideoInfo {
                    format,
                    width: w,
                    height: h,
                    framerate: spec.framerate,
                }))
            }
            DecoderConfig::ArgmaxLabel(labels) => {
                if !spec.dtype.is_float() || spec.dim.element_count() != labels.len() {
                    return Err(TransformError::SpecMismatch(format!(
                        "argmax_label needs a float vector of {} scores, got {} {}",
                        labels.len(),
                        spec.dtype,
                        spec.dim
                    )));
                }
                Ok(Caps::Text {
                    framerate: spec.framerate,
                })
            }
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn decode(buffer: &Buffer, cfg: &DecoderConfig) -> Result<Buffer, TransformError> {
    let caps = Arc::new(cfg.output_caps(buffer.caps())?);
    decode_into(buffer, cfg, caps)
}

fn decode_into(buffer: &Buffer, cfg: &DecoderConfig, caps: Arc<Caps>) -> Result<Buffer, TransformError> {
    match cfg {
        DecoderConfig::DirectVideo => Ok(buffer.clone().relabel(caps)?),
        DecoderConfig::ArgmaxLabel(labels) => {
            let dtype = buffer.caps().as_tensor().expect("checked").dtype;
            let i = argmax(&read_f64(buffer.bytes(), dtype)).unwrap_or(0);
            let text = labels[i].as_bytes().to_vec();
            Ok(Buffer::new(caps, Payload::from_vec(text), buffer.pts)?.with_seq(buffer.seq))
        }
    }
}

struct Decoder {
    cfg: DecoderConfig,
    caps: Arc<Caps>,
}

impl Element for Decoder {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let b = decode_into(&buffer, &self.cfg, self.caps.clone())?;
        out.push(0, b)
    }
}

impl ElementConfig for DecoderConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        self.output_caps(n.single_input())
            .map(|c| vec![c])
            .map_err(|e| NegotiationError::on_pad("sink", e.to_string()))
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        Ok(Instance::chain(Decoder {
            cfg: self.clone(),
            caps: Arc::new(cx.pads.srcs[0].1.clone()),
        }))
    }
}

const DECODER_MODES: &[(&str, &str)] = &[
    ("direct_video", "direct_video"),
    ("argmax_label", "argmax_label"),
    ("image_labeling", "argmax_label"),
];

pub(crate) const DECODER: StaticFactory = StaticFactory {
    kind: "tensor_decoder",
    aliases: &[],
    description: "Turns tensor streams into raw video frames or text labels",
    properties: &[
        PropSpec::new("mode", PropKind::Enum(DECODER_MODES), "direct_video or argmax_label").required(),
        PropSpec::new("labels", PropKind::Str, "comma-separated labels for argmax_label").aliases(&["option1"]),
    ],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "other/tensor"),
        PadTemplate::always("src", PadDirection::Src, "video/x-raw; text/x-raw"),
    ],
    configure: |props, _| {
        let cfg = match props.str("mode") {
            Some("argmax_label") => {
                let raw = props
                    .str("labels")
                    .ok_or_else(|| ConfigError::BadProperty("argmax_label needs labels=".into()))?;
                let labels: Vec<String> = raw.split(',').map(|s| s.trim().to_string()).collect();
                if labels.iter().any(String::is_empty) {
                    return Err(ConfigError::BadProperty(format!("empty label in '{raw}'")));
                }
                DecoderConfig::ArgmaxLabel(labels)
            }
            _ => DecoderConfig::DirectVideo,
        };
        Ok(Arc::new(cfg))
    },
};

// videoscale

#[derive(Debug)]
struct ScaleConfig {
    width: Option<u32>,
    height: Option<u32>,
}

struct Scale {
    caps: Arc<Caps>,
    input: VideoInfo,
}

impl Element for Scale {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let Caps::Video(o) = &*self.caps else { unreachable!("video output") };
        if o.width == self.input.width && o.height == self.input.height {
            return out.push(0, buffer.relabel(self.caps.clone())?);
        }
        let i = &self.input;
        let bytes = resize_nn(buffer.bytes(), [i.format.channels(), i.width, i.height, 1], 1, o.width, o.height);
        let b = Buffer::new(self.caps.clone(), Payload::from_vec(bytes), buffer.pts)?.with_seq(buffer.seq);
        out.push(0, b)
    }
}

impl ElementConfig for ScaleConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        let Caps::Video(v) = n.single_input() else {
            return Err(NegotiationError::on_pad(
                "sink",
                format!("videoscale needs video/x-raw, got {}", n.single_input()),
            ));
        };
        let wanted = n.downstream.first().and_then(|f| f.as_ref());
        let width = self.width.or(wanted.and_then(|f| f.get_u32("width"))).unwrap_or(v.width);
        let height = self.height.or(wanted.and_then(|f| f.get_u32("height"))).unwrap_or(v.height);
        if width == 0 || height == 0 || width > crate::tensor::MAX_EXTENT || height > crate::tensor::MAX_EXTENT {
            return Err(NegotiationError::new(format!("cannot scale to {width}x{height}")));
        }
        Ok(vec![Caps::Video(VideoInfo { width, height, ..*v })])
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let Caps::Video(input) = cx.pads.sinks[0].1 else {
            return Err(ElementError::Other("videoscale input is not video".into()));
        };
        Ok(Instance::chain(Scale {
            caps: Arc::new(cx.pads.srcs[0].1.clone()),
            input,
        }))
    }
}

const SIZE: PropKind = PropKind::Int {
    min: 1,
    max: crate::tensor::MAX_EXTENT as i64,
};

pub(crate) const VIDEOSCALE: StaticFactory = StaticFactory {
    kind: "videoscale",
    aliases: &[],
    description: "Nearest-neighbour scaling of raw video; the size comes from the downstream spec filter",
    properties: &[
        PropSpec::new("width", SIZE, "output width; default from downstream"),
        PropSpec::new("height", SIZE, "output height; default from downstream"),
    ],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "video/x-raw"),
        PadTemplate::always("src", PadDirection::Src, "video/x-raw"),
    ],
    configure: |props, _| {
        Ok(Arc::new(ScaleConfig {
            width: props.int("width").map(|v| v as u32),
            height: props.int("height").map(|v| v as u32),
        }))
    },
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Framerate, TensorSpec};

    fn tensor(extents: [u32; 4], dtype: DataType, bytes: Vec<u8>) -> Buffer {
        Buffer::new(Arc::new(Caps::Tensor(TensorSpec::of(extents, dtype))), Payload::from_vec(bytes), 3).unwrap()
    }

    fn labels() -> DecoderConfig {
        DecoderConfig::ArgmaxLabel(vec!["cat".into(), "dog".into(), "bird".into()])
    }

    #[test]
    fn argmax_picks_dog() {
        let v: Vec<u8> = [0.1f32, 0.7, 0.2].iter().flat_map(|x| x.to_le_bytes()).collect();
        let out = decode(&tensor([3, 1, 1, 1], DataType::F32, v), &labels()).unwrap();
        assert_eq!(out.bytes(), b"dog");
        assert_eq!(out.pts, 3);
    }

    #[test]
    fn ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn label_count_mismatch() {
        let four = DecoderConfig::ArgmaxLabel(vec!["a".into(), "b".into(), "c".into(), "d".into()]);
        let v = tensor([3, 1, 1, 1], DataType::F32, vec![0; 12]);
        assert!(matches!(decode(&v, &four), Err(TransformError::SpecMismatch(_))));
    }

    #[test]
    fn direct_video_is_identity() {
        let bytes: Vec<u8> = (0..3 * 4 * 2).map(|x| x as u8).collect();
        let t = tensor([3, 4, 2, 1], DataType::U8, bytes.clone());
        let v = decode(&t, &DecoderConfig::DirectVideo).unwrap();
        assert_eq!(v.bytes(), &bytes[..]);
        assert!(v.payload().ptr_eq(t.payload()));
        let Caps::Video(info) = v.caps() else { panic!() };
        assert_eq!((info.format, info.width, info.height), (VideoFormat::Rgb, 4, 2));
        assert_eq!(info.framerate, Framerate::WILDCARD);
        let f = tensor([3, 4, 2, 1], DataType::F32, vec![0; 96]);
        assert!(decode(&f, &DecoderConfig::DirectVideo).is_err());
    }
}
