use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::element::props::{check_caps, check_rate, LEAK_VALUES};
use crate::element::{
    ConfigError, ElementConfig, ElementError, Instance, InstanceContext, Negotiation, NegotiationError,
    PadDirection, PadTemplate, Produced, PropKind, PropSpec, Properties, Source, SourceClock, StaticFactory,
};
use crate::runtime::{BoundedQueue, Leak, PushOutcome, QueuePolicy};
use crate::tensor::{Buffer, Caps, ClockTime, DataType, Framerate, Payload};
use crate::transform::write_f64;

use super::{read_framed, IoError, LocationPattern};

/// How synthetic frames are filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    Constant(f64),
    /// Element `k` of frame `i` is `(i + k) mod 256`.
    Ramp,
    /// Alternating 0 and the type's maximum (1.0 for floats) over width and height.
    Checkerboard,
    /// Uniform values, reproducible from `(seed, frame index)`.
    Random(u64),
}

impl FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
        let num = |what: &str| -> Result<f64, String> {
            arg.unwrap_or("0")
                .parse()
                .map_err(|_| format!("bad {what} in '{s}'"))
        };
        match name {
            "constant" => Ok(Generator::Constant(num("value")?)),
            "ramp" => Ok(Generator::Ramp),
            "checkerboard" => Ok(Generator::Checkerboard),
            "random" | "seeded_random" => arg
                .unwrap_or("0")
                .parse()
                .map(Generator::Random)
                .map_err(|_| format!("bad seed in '{s}'")),
            _ => Err(format!("unknown pattern '{name}'")),
        }
    }
}

fn checker_high(dtype: DataType) -> f64 {
    match dtype {
        DataType::F32 | DataType::F64 => 1.0,
        DataType::I8 => 127.0,
        _ => 255.0,
    }
}

fn fill(dtype: DataType, extents: [u32; 4], generator: Generator, index: u64, member: u64) -> Vec<u8> {
    let n: usize = extents.iter().map(|e| *e as usize).product();
    match generator {
        Generator::Constant(v) => write_f64(&[v], dtype, true).repeat(n),
        Generator::Ramp => {
            let v: Vec<f64> = (0..n as u64).map(|k| ((index + k) % 256) as f64).collect();
            write_f64(&v, dtype, true)
        }
        Generator::Checkerboard => {
            let [c, w, _, _] = extents.map(|e| e as u64);
            let high = checker_high(dtype);
            let v: Vec<f64> = (0..n as u64)
                .map(|k| {
                    let (x, y) = ((k / c) % w, k / (c * w));
                    if (x + y + index).is_multiple_of(2) { 0.0 } else { high }
                })
                .collect();
            write_f64(&v, dtype, true)
        }
        Generator::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index);
            rng.set_word_pos(member as u128 * (1 << 40));
            if dtype.is_float() {
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                write_f64(&v, dtype, false)
            } else {
                let mut bytes = vec![0; n * dtype.width()];
                rng.fill_bytes(&mut bytes);
                bytes
            }
        }
    }
}

/// Frame `index` of a synthetic stream of `caps`: one memory per tensor.
pub fn generate(caps: &Caps, generator: Generator, index: u64) -> Vec<Payload> {
    match caps {
        Caps::Tensor(s) => vec![Payload::from_vec(fill(s.dtype, s.dim.extents(), generator, index, 0))],
        Caps::Tensors(t) => t
            .tensors()
            .iter()
            .enumerate()
            .map(|(m, i)| Payload::from_vec(fill(i.dtype, i.dim.extents(), generator, index, m as u64)))
            .collect(),
        Caps::Video(v) => {
            let extents = [v.format.channels(), v.width, v.height, 1];
            vec![Payload::from_vec(fill(DataType::U8, extents, generator, index, 0))]
        }
        other => {
            let n = other.byte_size().unwrap_or(0) as u32;
            vec![Payload::from_vec(fill(DataType::U8, [n.max(1), 1, 1, 1], generator, index, 0))]
        }
    }
}

fn parse_caps(raw: &str) -> Result<Caps, ConfigError> {
    raw.parse()
        .map_err(|e: crate::tensor::SpecError| ConfigError::BadProperty(e.to_string()))
}

fn parse_rate(raw: &str) -> Result<Framerate, ConfigError> {
    raw.parse()
        .map_err(|e: crate::tensor::SpecError| ConfigError::BadProperty(e.to_string()))
}

/// Stamp of frame `index`: from the rate, or the index itself when unpaced.
fn stamp(rate: Framerate, index: u64) -> ClockTime {
    rate.timestamp_of(index).unwrap_or(index)
}

/// Output caps: the declared caps with the `rate=` override applied.
fn caps_with_rate(props: &Properties, caps: Caps) -> Result<Caps, ConfigError> {
    match props.str("rate") {
        Some(r) => Ok(caps.with_framerate(parse_rate(r)?)),
        None => Ok(caps),
    }
}

// synthetic_src

#[derive(Debug)]
struct SyntheticConfig {
    caps: Caps,
    generator: Generator,
    frames: Option<u64>,
    sync: bool,
}

struct Synthetic {
    caps: Arc<Caps>,
    generator: Generator,
    frames: Option<u64>,
    sync: bool,
    index: u64,
}

impl Source for Synthetic {
    fn produce(&mut self, _: &dyn SourceClock) -> Result<Produced, ElementError> {
        if self.frames.is_some_and(|n| self.index >= n) {
            return Ok(Produced::Eos);
        }
        let rate = self.caps.framerate();
        let pts = stamp(rate, self.index);
        let memories = generate(&self.caps, self.generator, self.index);
        let buffer = Buffer::from_memories(self.caps.clone(), memories, pts)?.with_seq(self.index);
        self.index += 1;
        let due = (self.sync && !rate.is_wildcard()).then_some(pts);
        Ok(Produced::Buffer { buffer, due })
    }
}

impl ElementConfig for SyntheticConfig {
    fn negotiate(&self, _: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        Ok(vec![self.caps.clone()])
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        Ok(Instance::source(Synthetic {
            caps: Arc::new(self.caps.clone()),
            generator: self.generator,
            frames: self.frames,
            sync: self.sync,
            index: 0,
        }))
    }
}

fn check_generator(raw: &str) -> Result<(), String> {
    raw.parse::<Generator>().map(|_| ())
}

pub(crate) const SYNTHETIC_SRC: StaticFactory = StaticFactory {
    kind: "synthetic_src",
    aliases: &["testsrc"],
    description: "Deterministic generated frames: constant, ramp, checkerboard or seeded random",
    properties: &[
        PropSpec::new("caps", PropKind::Checked(check_caps), "frame type")
            .aliases(&["spec"])
            .default("other/tensor,dimension=1:1:1:1,type=uint8,framerate=0/1"),
        PropSpec::new(
            "pattern",
            PropKind::Checked(check_generator),
            "constant[:v], ramp, checkerboard or random[:seed]",
        )
        .default("constant:0"),
        PropSpec::new("seed", PropKind::Int { min: 0, max: i64::MAX }, "seed for pattern=random"),
        PropSpec::new("frames", PropKind::Int { min: 0, max: i64::MAX }, "frames before EOS; 0 is endless")
            .aliases(&["num-buffers"])
            .default("0"),
        PropSpec::new("rate", PropKind::Checked(check_rate), "frame rate; overrides the caps rate"),
        PropSpec::new("sync", PropKind::Bool, "pace frames at the rate; false runs as fast as possible")
            .default("true"),
    ],
    pads: &[PadTemplate::always("src", PadDirection::Src, "ANY")],
    configure: |props, _| {
        let caps = caps_with_rate(props, parse_caps(props.str("caps").unwrap_or_default())?)?;
        if caps.byte_size().is_none() {
            return Err(ConfigError::BadProperty(format!("{caps} has no fixed frame size")));
        }
        let mut generator: Generator = props
            .str("pattern")
            .unwrap_or("constant:0")
            .parse()
            .map_err(ConfigError::BadProperty)?;
        if let (Generator::Random(_), Some(seed)) = (generator, props.int("seed")) {
            generator = Generator::Random(seed as u64);
        }
        let frames = props.int("frames").filter(|n| *n > 0).map(|n| n as u64);
        Ok(Arc::new(SyntheticConfig {
            caps,
            generator,
            frames,
            sync: props.bool("sync").unwrap_or(true),
        }))
    },
};

// multifilesrc

#[derive(Debug)]
enum FileLayout {
    Pattern(LocationPattern),
    Framed(PathBuf),
}

#[derive(Debug)]
struct MultiFileConfig {
    layout: FileLayout,
    start: u64,
    caps: Caps,
    sync: bool,
}

struct MultiFile {
    layout: FileLayout,
    caps: Arc<Caps>,
    frame_size: Option<usize>,
    sync: bool,
    next_file: u64,
    index: u64,
    framed: Option<std::vec::IntoIter<(ClockTime, Vec<u8>)>>,
}

impl MultiFile {
    fn next_frame(&mut self) -> Result<Option<(String, ClockTime, Vec<u8>)>, IoError> {
        match &self.layout {
            FileLayout::Pattern(p) => {
                let path = p.path(self.next_file);
                match std::fs::read(&path) {
                    Ok(bytes) => {
                        self.next_file += 1;
                        let pts = stamp(self.caps.framerate(), self.index);
                        Ok(Some((path, pts, bytes)))
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(IoError::io(path.as_ref(), e)),
                }
            }
            FileLayout::Framed(path) => {
                if self.framed.is_none() {
                    self.framed = Some(read_framed(path)?.into_iter());
                }
                let name = path.display().to_string();
                Ok(self.framed.as_mut().and_then(Iterator::next).map(|(pts, b)| (name, pts, b)))
            }
        }
    }
}

impl Source for MultiFile {
    fn produce(&mut self, _: &dyn SourceClock) -> Result<Produced, ElementError> {
        let Some((path, pts, bytes)) = self.next_frame()? else {
            return Ok(Produced::Eos);
        };
        if let Some(expected) = self.frame_size {
            if bytes.len() != expected {
                return Err(IoError::LengthMismatch {
                    path,
                    expected,
                    actual: bytes.len(),
                }
                .into());
            }
        }
        let buffer = Buffer::new(self.caps.clone(), Payload::from_vec(bytes), pts)?.with_seq(self.index);
        self.index += 1;
        let due = (self.sync && !self.caps.framerate().is_wildcard()).then_some(pts);
        Ok(Produced::Buffer { buffer, due })
    }
}

impl ElementConfig for MultiFileConfig {
    fn negotiate(&self, _: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        Ok(vec![self.caps.clone()])
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let layout = match &self.layout {
            FileLayout::Pattern(p) => FileLayout::Pattern(p.clone()),
            FileLayout::Framed(p) => FileLayout::Framed(p.clone()),
        };
        Ok(Instance::source(MultiFile {
            layout,
            caps: Arc::new(self.caps.clone()),
            frame_size: self.caps.byte_size(),
            sync: self.sync,
            next_file: self.start,
            index: 0,
            framed: None,
        }))
    }
}

pub(crate) const MULTIFILESRC: StaticFactory = StaticFactory {
    kind: "multifilesrc",
    aliases: &[],
    description: "Reads one frame per numbered file, or every record of a framed file",
    properties: &[
        PropSpec::new("location", PropKind::Str, "path pattern with one %d hole, or a framed file")
            .required(),
        PropSpec::new("start", PropKind::Int { min: 0, max: i64::MAX }, "first file index")
            .aliases(&["start-index"])
            .default("0"),
        PropSpec::new("caps", PropKind::Checked(check_caps), "type of each frame")
            .aliases(&["spec"])
            .default("application/octet-stream"),
        PropSpec::new("rate", PropKind::Checked(check_rate), "frame rate; 0 reads as fast as possible"),
        PropSpec::new("framed", PropKind::Bool, "location is one file of length+timestamp records")
            .default("false"),
        PropSpec::new("sync", PropKind::Bool, "pace frames at the rate").default("true"),
    ],
    pads: &[PadTemplate::always("src", PadDirection::Src, "ANY")],
    configure: |props, _| {
        let location = props.str("location").unwrap_or_default();
        let layout = if props.bool("framed").unwrap_or(false) {
            FileLayout::Framed(PathBuf::from(location))
        } else {
            FileLayout::Pattern(LocationPattern::parse(location).map_err(|e| ConfigError::BadProperty(e.to_string()))?)
        };
        Ok(Arc::new(MultiFileConfig {
            layout,
            start: props.int("start").unwrap_or(0) as u64,
            caps: caps_with_rate(props, parse_caps(props.str("caps").unwrap_or_default())?)?,
            sync: props.bool("sync").unwrap_or(true),
        }))
    },
};

// appsrc

/// Application side of an `appsrc`.
#[derive(Debug)]
pub struct AppSrcHandle {
    caps: Caps,
    queue: BoundedQueue<Option<Buffer>>,
}

impl AppSrcHandle {
    /// Queues a buffer. Its type must match the element's caps.
    pub fn push(&self, buffer: Buffer) -> Result<PushOutcome, IoError> {
        if !buffer.caps().is_compatible(&self.caps) {
            return Err(IoError::Framing {
                path: "appsrc".into(),
                message: format!("pushed {} into a {} source", buffer.caps(), self.caps),
            });
        }
        Ok(self.queue.push(Some(buffer)))
    }

    /// No more buffers will be pushed.
    pub fn end_of_stream(&self) {
        self.queue.push_blocking(None);
    }

    pub fn caps(&self) -> &Caps {
        &self.caps
    }
}

#[derive(Debug)]
struct AppSrcConfig {
    caps: Caps,
    policy: QueuePolicy,
}

struct AppSrc {
    handle: Arc<AppSrcHandle>,
    caps: Arc<Caps>,
    index: u64,
    last_pts: ClockTime,
}

impl Source for AppSrc {
    fn produce(&mut self, _: &dyn SourceClock) -> Result<Produced, ElementError> {
        match self.handle.queue.pop_timeout(Duration::from_millis(10)) {
            None | Some(Some(None)) => Ok(Produced::Eos),
            Some(None) => Ok(Produced::Pending),
            Some(Some(Some(b))) => {
                let mut b = b.relabel(self.caps.clone())?.with_seq(self.index);
                b.pts = b.pts.max(self.last_pts);
                self.last_pts = b.pts;
                self.index += 1;
                Ok(Produced::Buffer { buffer: b, due: None })
            }
        }
    }
}

impl ElementConfig for AppSrcConfig {
    fn negotiate(&self, _: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        Ok(vec![self.caps.clone()])
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let handle = Arc::new(AppSrcHandle {
            caps: self.caps.clone(),
            queue: BoundedQueue::new(self.policy),
        });
        let closer = handle.clone();
        Ok(Instance::source(AppSrc {
            handle: handle.clone(),
            caps: Arc::new(self.caps.clone()),
            index: 0,
            last_pts: 0,
        })
        .with_handle(handle)
        .with_stop_hook(Arc::new(move || closer.queue.close())))
    }
}

pub(crate) const APPSRC: StaticFactory = StaticFactory {
    kind: "appsrc",
    aliases: &[],
    description: "Frames pushed by the application",
    properties: &[
        PropSpec::new("caps", PropKind::Checked(check_caps), "type of pushed frames")
            .aliases(&["spec"])
            .required(),
        PropSpec::new("max-buffers", PropKind::Int { min: 1, max: 1 << 20 }, "frames queued before the leak policy applies")
            .default("16"),
        PropSpec::new("leaky", PropKind::Enum(LEAK_VALUES), "what to do when full")
            .aliases(&["leak"])
            .default("none"),
    ],
    pads: &[PadTemplate::always("src", PadDirection::Src, "ANY")],
    configure: |props, _| {
        let leak: Leak = props
            .str("leaky")
            .unwrap_or("none")
            .parse()
            .map_err(ConfigError::BadProperty)?;
        Ok(Arc::new(AppSrcConfig {
            caps: parse_caps(props.str("caps").unwrap_or_default())?,
            policy: QueuePolicy::new(props.int("max-buffers").unwrap_or(16) as usize, leak),
        }))
    },
};
