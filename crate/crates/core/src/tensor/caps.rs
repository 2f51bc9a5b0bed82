//! Stream types carried on links.
//!
//! Tensor streams are the point of the framework, but the stages in front of
//! a converter carry raw media (video frames, audio blocks, text, opaque
//! bytes). [`Caps`] covers both; [`CapsFilter`] is the partially specified
//! form used by spec filters in a pipeline description.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::spec::{fmt_tensor, fmt_tensors, parse_tensor, parse_tensors, split_fields, Field};
use super::{DataType, Framerate, SpecError, TensorDim, TensorSpec, TensorsSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VideoFormat {
    Gray8,
    Rgb,
    Rgba,
}

impl VideoFormat {
    pub fn channels(self) -> u32 {
        match self {
            VideoFormat::Gray8 => 1,
            VideoFormat::Rgb => 3,
            VideoFormat::Rgba => 4,
        }
    }

    pub fn from_channels(channels: u32) -> Option<Self> {
        match channels {
            1 => Some(VideoFormat::Gray8),
            3 => Some(VideoFormat::Rgb),
            4 => Some(VideoFormat::Rgba),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VideoFormat::Gray8 => "GRAY8",
            VideoFormat::Rgb => "RGB",
            VideoFormat::Rgba => "RGBA",
        }
    }
}

impl FromStr for VideoFormat {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GRAY8" => Ok(VideoFormat::Gray8),
            "RGB" => Ok(VideoFormat::Rgb),
            "RGBA" => Ok(VideoFormat::Rgba),
            _ => Err(SpecError::syntax(0, format!("unsupported video format '{s}'"))),
        }
    }
}

/// Raw, packed, row-major video frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoInfo {
    pub format: VideoFormat,
    pub width: u32,
    pub height: u32,
    pub framerate: Framerate,
}

impl VideoInfo {
    pub fn frame_size(&self) -> usize {
        self.format.channels() as usize * self.width as usize * self.height as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AudioFormat {
    U8,
    S16le,
    F32le,
}

impl AudioFormat {
    pub fn width(self) -> usize {
        match self {
            AudioFormat::U8 => 1,
            AudioFormat::S16le => 2,
            AudioFormat::F32le => 4,
        }
    }

    pub fn dtype(self) -> DataType {
        match self {
            AudioFormat::U8 => DataType::U8,
            AudioFormat::S16le => DataType::I16,
            AudioFormat::F32le => DataType::F32,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AudioFormat::U8 => "U8",
            AudioFormat::S16le => "S16LE",
            AudioFormat::F32le => "F32LE",
        }
    }
}

impl FromStr for AudioFormat {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "U8" => Ok(AudioFormat::U8),
            "S16LE" => Ok(AudioFormat::S16le),
            "F32LE" => Ok(AudioFormat::F32le),
            _ => Err(SpecError::syntax(0, format!("unsupported audio format '{s}'"))),
        }
    }
}

/// Interleaved audio in fixed-size blocks of `samples` per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AudioInfo {
    pub format: AudioFormat,
    pub channels: u32,
    pub rate: u32,
    pub samples: u32,
    pub framerate: Framerate,
}

impl AudioInfo {
    pub fn frame_size(&self) -> usize {
        self.format.width() * self.channels as usize * self.samples as usize
    }
}

/// The concrete type of a stream on a link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Caps {
    Tensor(TensorSpec),
    Tensors(TensorsSpec),
    Video(VideoInfo),
    Audio(AudioInfo),
    Text { framerate: Framerate },
    Octet { framerate: Framerate },
}

impl Caps {
    pub fn media_type(&self) -> &'static str {
        match self {
            Caps::Tensor(_) => "other/tensor",
            Caps::Tensors(_) => "other/tensors",
            Caps::Video(_) => "video/x-raw",
            Caps::Audio(_) => "audio/x-raw",
            Caps::Text { .. } => "text/x-raw",
            Caps::Octet { .. } => "application/octet-stream",
        }
    }

    pub fn framerate(&self) -> Framerate {
        match self {
            Caps::Tensor(s) => s.framerate,
            Caps::Tensors(s) => s.framerate,
            Caps::Video(v) => v.framerate,
            Caps::Audio(a) => a.framerate,
            Caps::Text { framerate } | Caps::Octet { framerate } => *framerate,
        }
    }

    pub fn with_framerate(&self, rate: Framerate) -> Caps {
        let mut c = self.clone();
        match &mut c {
            Caps::Tensor(s) => s.framerate = rate,
            Caps::Tensors(s) => s.framerate = rate,
            Caps::Video(v) => v.framerate = rate,
            Caps::Audio(a) => a.framerate = rate,
            Caps::Text { framerate } | Caps::Octet { framerate } => *framerate = rate,
        }
        c
    }

    /// Bytes per frame, or `None` for variable-size streams (text, octets).
    pub fn byte_size(&self) -> Option<usize> {
        match self {
            Caps::Tensor(s) => Some(s.byte_size()),
            Caps::Tensors(s) => Some(s.byte_size()),
            Caps::Video(v) => Some(v.frame_size()),
            Caps::Audio(a) => Some(a.frame_size()),
            Caps::Text { .. } | Caps::Octet { .. } => None,
        }
    }

    /// Expected size of each memory block in a buffer of this type.
    pub fn memory_sizes(&self) -> Option<Vec<usize>> {
        match self {
            Caps::Tensors(s) => Some(s.tensors().iter().map(|t| t.byte_size()).collect()),
            other => other.byte_size().map(|n| vec![n]),
        }
    }

    pub fn as_tensor(&self) -> Option<&TensorSpec> {
        match self {
            Caps::Tensor(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_tensors(&self) -> Option<&TensorsSpec> {
        match self {
            Caps::Tensors(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_tensor_stream(&self) -> bool {
        matches!(self, Caps::Tensor(_) | Caps::Tensors(_))
    }

    /// Equal in every field except framerate, where `0/1` matches any rate.
    pub fn is_compatible(&self, other: &Caps) -> bool {
        self.framerate().accepts(&other.framerate())
            && self.with_framerate(Framerate::WILDCARD) == other.with_framerate(Framerate::WILDCARD)
    }

    /// Canonical `key=value` fields, in print order.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        match self {
            Caps::Tensor(s) => vec![
                ("dimension", s.dim.to_string()),
                ("type", s.dtype.to_string()),
                ("framerate", s.framerate.to_string()),
            ],
            Caps::Tensors(s) => {
                let dims: Vec<String> = s.tensors().iter().map(|t| t.dim.to_string()).collect();
                let types: Vec<&str> = s.tensors().iter().map(|t| t.dtype.name()).collect();
                vec![
                    ("num_tensors", s.num_tensors().to_string()),
                    ("dimensions", dims.join(".")),
                    ("types", types.join(",")),
                    ("framerate", s.framerate.to_string()),
                ]
            }
            Caps::Video(v) => vec![
                ("format", v.format.name().to_string()),
                ("width", v.width.to_string()),
                ("height", v.height.to_string()),
                ("framerate", v.framerate.to_string()),
            ],
            Caps::Audio(a) => vec![
                ("format", a.format.name().to_string()),
                ("channels", a.channels.to_string()),
                ("rate", a.rate.to_string()),
                ("samples", a.samples.to_string()),
                ("framerate", a.framerate.to_string()),
            ],
            Caps::Text { framerate } | Caps::Octet { framerate } => {
                vec![("framerate", framerate.to_string())]
            }
        }
    }
}

impl fmt::Display for Caps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Caps::Tensor(s) => f.write_str(&fmt_tensor(s)),
            Caps::Tensors(s) => f.write_str(&fmt_tensors(s)),
            other => {
                f.write_str(other.media_type())?;
                for (k, v) in other.fields() {
                    write!(f, ",{k}={v}")?;
                }
                Ok(())
            }
        }
    }
}

fn field_u32(fields: &[Field<'_>], key: &str, len: usize) -> Result<u32, SpecError> {
    let f = fields
        .iter()
        .find(|f| f.key == key)
        .ok_or_else(|| SpecError::syntax(len, format!("missing field '{key}'")))?;
    let v: u32 = f
        .value
        .parse()
        .map_err(|_| SpecError::syntax(f.offset, format!("bad integer for '{key}'")))?;
    if v == 0 || v > super::MAX_EXTENT {
        return Err(SpecError::Range(format!("{key}={v} outside [1, {}]", super::MAX_EXTENT)));
    }
    Ok(v)
}

fn field_rate(fields: &[Field<'_>]) -> Result<Framerate, SpecError> {
    match fields.iter().find(|f| f.key == "framerate") {
        Some(f) => f.value.parse(),
        None => Ok(Framerate::WILDCARD),
    }
}

fn only(fields: &[Field<'_>], known: &[&str]) -> Result<(), SpecError> {
    match fields.iter().find(|f| !known.contains(&f.key)) {
        Some(f) => Err(SpecError::syntax(f.offset, format!("unknown field '{}'", f.key))),
        None => Ok(()),
    }
}

impl FromStr for Caps {
    type Err = SpecError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (media, fields) = split_fields(text)?;
        let len = text.len();
        match media {
            "other/tensor" => Ok(Caps::Tensor(parse_tensor(&fields, len)?)),
            "other/tensors" => Ok(Caps::Tensors(parse_tensors(&fields, len)?)),
            "video/x-raw" => {
                only(&fields, &["format", "width", "height", "framerate"])?;
                let format = match fields.iter().find(|f| f.key == "format") {
                    Some(f) => f.value.parse()?,
                    None => VideoFormat::Rgb,
                };
                Ok(Caps::Video(VideoInfo {
                    format,
                    width: field_u32(&fields, "width", len)?,
                    height: field_u32(&fields, "height", len)?,
                    framerate: field_rate(&fields)?,
                }))
            }
            "audio/x-raw" => {
                only(&fields, &["format", "channels", "rate", "samples", "framerate"])?;
                let format = match fields.iter().find(|f| f.key == "format") {
                    Some(f) => f.value.parse()?,
                    None => AudioFormat::S16le,
                };
                Ok(Caps::Audio(AudioInfo {
                    format,
                    channels: field_u32(&fields, "channels", len)?,
                    rate: field_u32(&fields, "rate", len)?,
                    samples: field_u32(&fields, "samples", len)?,
                    framerate: field_rate(&fields)?,
                }))
            }
            "text/x-raw" => {
                only(&fields, &["framerate", "format"])?;
                Ok(Caps::Text {
                    framerate: field_rate(&fields)?,
                })
            }
            "application/octet-stream" => {
                only(&fields, &["framerate"])?;
                Ok(Caps::Octet {
                    framerate: field_rate(&fields)?,
                })
            }
            other => Err(SpecError::syntax(0, format!("unknown media type '{other}'"))),
        }
    }
}

/// A partially specified stream type: a media type plus any subset of its
/// fields. Used for spec filters between `!` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapsFilter {
    pub media: String,
    pub fields: BTreeMap<String, String>,
}

impl CapsFilter {
    pub fn any_of(media: &str) -> Self {
        CapsFilter {
            media: media.to_string(),
            fields: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    pub fn get_u32(&self, key: &str) -> Option<u32> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    /// Whether a concrete stream type satisfies every constrained field.
    pub fn accepts(&self, caps: &Caps) -> bool {
        if caps.media_type() != self.media {
            return false;
        }
        let actual = caps.fields();
        self.fields.iter().all(|(key, want)| {
            let Some((_, have)) = actual.iter().find(|(k, _)| k == key) else {
                return false;
            };
            match key.as_str() {
                "framerate" => match (want.parse::<Framerate>(), have.parse::<Framerate>()) {
                    (Ok(w), Ok(h)) => w.accepts(&h),
                    _ => false,
                },
                "dimension" => want.parse::<TensorDim>().ok() == have.parse::<TensorDim>().ok(),
                "dimensions" => {
                    let parse = |s: &str| {
                        s.split('.')
                            .map(|d| d.parse::<TensorDim>().ok())
                            .collect::<Vec<_>>()
                    };
                    parse(want) == parse(have)
                }
                _ => want == have,
            }
        })
    }

    /// The filter as a concrete type, when it pins every required field.
    pub fn to_caps(&self) -> Option<Caps> {
        self.to_string().parse().ok()
    }
}

impl fmt::Display for CapsFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.media)?;
        for (k, v) in &self.fields {
            write!(f, ",{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for CapsFilter {
    type Err = SpecError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (media, fields) = split_fields(text)?;
        if !media.contains('/') {
            return Err(SpecError::syntax(0, format!("'{media}' is not a media type")));
        }
        let probe = Caps::from_str(media);
        if let Err(SpecError::Syntax { message, .. }) = &probe {
            if message.starts_with("unknown media type") {
                return Err(SpecError::syntax(0, message.clone()));
            }
        }
        let known: &[&str] = match media {
            "other/tensor" => &["dimension", "type", "framerate"],
            "other/tensors" => &["num_tensors", "dimensions", "types", "framerate"],
            "video/x-raw" => &["format", "width", "height", "framerate"],
            "audio/x-raw" => &["format", "channels", "rate", "samples", "framerate"],
            "text/x-raw" => &["format", "framerate"],
            _ => &["framerate"],
        };
        only(&fields, known)?;
        for f in &fields {
            let ok = match f.key {
                "framerate" => f.value.parse::<Framerate>().is_ok(),
                "dimension" => f.value.parse::<TensorDim>().is_ok(),
                "type" => f.value.parse::<DataType>().is_ok(),
                "width" | "height" | "channels" | "rate" | "samples" | "num_tensors" => {
                    f.value.parse::<u32>().is_ok()
                }
                _ => true,
            };
            if !ok {
                return Err(SpecError::syntax(
                    f.offset,
                    format!("bad value '{}' for '{}'", f.value, f.key),
                ));
            }
        }
        Ok(CapsFilter {
            media: media.to_string(),
            fields: fields
                .into_iter()
                .map(|f| (f.key.to_string(), f.value))
                .collect(),
        })
    }
}
