use std::collections::VecDeque;
use std::sync::Arc;

use crate::element::{
    ConfigError, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext, Negotiation,
    NegotiationError, PadDirection, PadTemplate, PropKind, PropSpec, Properties, StaticFactory,
};
use crate::runtime::Outputs;
use crate::tensor::{Buffer, Caps, ClockTime, Framerate, Payload, TensorSpec, MAX_EXTENT};

use super::{check_axis, concat_bytes, expect_tensor, slice_bytes, AxisLayout, FlowError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregatorConfig {
    /// Frames carried by each incoming buffer.
    pub frames_in: u32,
    /// Frames in each emitted buffer.
    pub frames_out: u32,
    /// Frames dropped from the front after each emission.
    pub frames_flush: u32,
    pub dimension: usize,
}

impl AggregatorConfig {
    pub fn new(frames_in: u32, frames_out: u32, frames_flush: u32) -> Result<Self, FlowError> {
        let c = AggregatorConfig {
            frames_in,
            frames_out,
            frames_flush,
            dimension: 3,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn along(mut self, dimension: usize) -> Self {
        self.dimension = dimension;
        self
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let AggregatorConfig {
            frames_in: i,
            frames_out: o,
            frames_flush: f,
            ..
        } = *self;
        if i < 1 || o < i || f < 1 || f > o {
            return Err(FlowError::DimensionMismatch(format!(
                "aggregator needs 1 <= in <= out and 1 <= flush <= out (in={i} out={o} flush={f})"
            )));
        }
        Ok(())
    }

    /// Outputs produced from `n` incoming buffers.
    pub fn output_count(&self, n: u64) -> u64 {
        let frames = n * self.frames_in as u64;
        let (o, f) = (self.frames_out as u64, self.frames_flush as u64);
        if frames < o {
            0
        } else {
            (frames - o) / f + 1
        }
    }

    /// Type of one emitted buffer given the incoming type.
    pub fn output_spec(&self, input: &TensorSpec) -> Result<TensorSpec, FlowError> {
        let d = self.dimension;
        let extent = input.dim.get(d);
        if !extent.is_multiple_of(self.frames_in) {
            return Err(FlowError::DimensionMismatch(format!(
                "extent {extent} on axis {d} does not hold in={} whole frames",
                self.frames_in
            )));
        }
        let out = (extent / self.frames_in) as u64 * self.frames_out as u64;
        if out > MAX_EXTENT as u64 {
            return Err(FlowError::DimensionMismatch(format!(
                "aggregated extent {out} on axis {d} exceeds {MAX_EXTENT}"
            )));
        }
        let rate = scaled_rate(input.framerate, self.frames_in, self.frames_flush);
        Ok(TensorSpec::new(input.dim.with_axis(d, out as u32)?, input.dtype, rate))
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `rate * mul / div`, or the wildcard if it does not fit.
fn scaled_rate(rate: Framerate, mul: u32, div: u32) -> Framerate {
    if rate.is_wildcard() {
        return rate;
    }
    let (n, d) = (rate.num as u64 * mul as u64, rate.den as u64 * div as u64);
    let g = gcd(n, d);
    match (u32::try_from(n / g), u32::try_from(d / g)) {
        (Ok(n), Ok(d)) => Framerate::new(n, d).unwrap_or(Framerate::WILDCARD),
        _ => Framerate::WILDCARD,
    }
}

/// Temporal stacking of frames with a sliding window.
#[derive(Debug)]
pub struct Aggregator {
    cfg: AggregatorConfig,
    frame: AxisLayout,
    caps: Arc<Caps>,
    fifo: VecDeque<(Payload, ClockTime)>,
    seq: u64,
}

impl Aggregator {
    pub fn new(cfg: AggregatorConfig, input: &TensorSpec) -> Result<Self, FlowError> {
        cfg.validate()?;
        let out = cfg.output_spec(input)?;
        Self::with_caps(cfg, input, Arc::new(Caps::Tensor(out)))
    }

    fn with_caps(cfg: AggregatorConfig, input: &TensorSpec, caps: Arc<Caps>) -> Result<Self, FlowError> {
        let d = cfg.dimension;
        let frame_dim = input.dim.with_axis(d, input.dim.get(d) / cfg.frames_in)?;
        Ok(Aggregator {
            cfg,
            frame: AxisLayout::new(&frame_dim, input.dtype, d),
            caps,
            fifo: VecDeque::new(),
            seq: 0,
        })
    }

    pub fn held(&self) -> usize {
        self.fifo.len()
    }

    pub fn push(&mut self, buffer: Buffer) -> Result<Vec<Buffer>, FlowError> {
        let pts = buffer.pts;
        if self.cfg.frames_in == 1 {
            self.fifo.push_back((buffer.payload().clone(), pts));
        } else {
            let whole = AxisLayout {
                extent: self.frame.extent * self.cfg.frames_in as usize,
                ..self.frame
            };
            let sizes = vec![self.frame.extent; self.cfg.frames_in as usize];
            for part in slice_bytes(buffer.bytes(), whole, &sizes) {
                self.fifo.push_back((Payload::from_vec(part), pts));
            }
        }
        let mut out = Vec::new();
        let n = self.cfg.frames_out as usize;
        while self.fifo.len() >= n {
            let window: Vec<(&[u8], AxisLayout)> =
                self.fifo.iter().take(n).map(|(p, _)| (p.as_slice(), self.frame)).collect();
            let newest = self.fifo.iter().take(n).map(|(_, t)| *t).max().unwrap_or(0);
            let b = Buffer::new(self.caps.clone(), Payload::from_vec(concat_bytes(&window)), newest)?
                .with_seq(self.seq);
            self.seq += 1;
            out.push(b);
            for _ in 0..self.cfg.frames_flush {
                self.fifo.pop_front();
            }
        }
        Ok(out)
    }
}

impl ElementConfig for AggregatorConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        let spec = expect_tensor("sink", n.single_input())?;
        Ok(vec![Caps::Tensor(self.output_spec(spec)?)])
    }

    fn instantiate(&self, cx: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let input = *cx.pads.sinks[0].1.as_tensor().expect("negotiated tensor input");
        let caps = Arc::new(cx.pads.srcs[0].1.clone());
        Ok(Instance::chain(AggregatorElement(Aggregator::with_caps(*self, &input, caps)?)))
    }
}

struct AggregatorElement(Aggregator);

impl Element for AggregatorElement {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let mut flow = Flow::Ok;
        for b in self.0.push(buffer)? {
            flow = out.push(0, b)?;
        }
        Ok(flow)
    }
}

fn configure(props: &Properties) -> Result<AggregatorConfig, ConfigError> {
    let get = |k: &str| props.int(k).map(|v| v as u32);
    let frames_out = get("out").unwrap_or(1);
    let cfg = AggregatorConfig {
        frames_in: get("in").unwrap_or(1),
        frames_out,
        frames_flush: get("flush").unwrap_or(frames_out),
        dimension: props.str("dim").and_then(|d| d.parse().ok()).unwrap_or(3),
    };
    cfg.validate().map_err(|e| ConfigError::BadProperty(e.to_string()))?;
    Ok(cfg)
}

const FRAMES: PropKind = PropKind::Int {
    min: 1,
    max: MAX_EXTENT as i64,
};

pub(crate) const AGGREGATOR: StaticFactory = StaticFactory {
    kind: "tensor_aggregator",
    aliases: &[],
    description: "Stacks consecutive frames into one tensor with a sliding window",
    properties: &[
        PropSpec::new("in", FRAMES, "frames in each incoming buffer").aliases(&["frames-in"]).default("1"),
        PropSpec::new("out", FRAMES, "frames in each emitted buffer").aliases(&["frames-out"]).default("1"),
        PropSpec::new("flush", FRAMES, "frames dropped after each emission; defaults to out")
            .aliases(&["frames-flush"]),
        PropSpec::new("dim", PropKind::Checked(check_axis), "axis frames are stacked along")
            .aliases(&["frames-dim"])
            .default("3"),
    ],
    pads: &[
        PadTemplate::always("sink", PadDirection::Sink, "other/tensor"),
        PadTemplate::always("src", PadDirection::Src, "other/tensor"),
    ],
    configure: |props, _| Ok(Arc::new(configure(props)?)),
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DataType;
    use proptest::prelude::*;

    fn frame(k: u8, dtype: DataType, extents: [u32; 4]) -> Buffer {
        let spec = TensorSpec::of(extents, dtype);
        let n = spec.byte_size();
        Buffer::new(Arc::new(Caps::Tensor(spec)), Payload::from_vec(vec![k; n]), k as u64 * 10).unwrap()
    }

    fn run(cfg: AggregatorConfig, n: usize) -> Vec<Buffer> {
        let spec = TensorSpec::of([1, 1, 32, 1], DataType::U8);
        let mut a = Aggregator::new(cfg, &spec).unwrap();
        (0..n).flat_map(|k| a.push(frame(k as u8, DataType::U8, [1, 1, 32, 1])).unwrap()).collect()
    }

    #[test]
    fn dvs_windows() {
        let cfg = AggregatorConfig::new(1, 8, 8).unwrap();
        assert_eq!(cfg.output_count(1100), 137);
        let out = run(cfg, 1100);
        assert_eq!(out.len(), 137);
        assert_eq!(out[1].bytes()[0], 8);
        assert_eq!(out[0].caps().as_tensor().unwrap().dim.extents(), [1, 1, 32, 8]);
    }

    #[test]
    fn uwb_windows_overlap() {
        let cfg = AggregatorConfig::new(1, 75, 25).unwrap();
        assert_eq!(cfg.output_count(1100), 42);
        let out = run(cfg, 1100);
        assert_eq!(out.len(), 42);
        // Second window starts 25 frames in; each frame fills 32 bytes of the stack.
        assert_eq!(out[1].bytes()[0], 25);
        assert_eq!(out[1].bytes()[50 * 32], 75);
        assert_eq!(out[1].pts, 99 * 10);
    }

    #[test]
    fn one_one_one_is_identity() {
        let cfg = AggregatorConfig::new(1, 1, 1).unwrap();
        let out = run(cfg, 5);
        assert_eq!(out.len(), 5);
        for (k, b) in out.iter().enumerate() {
            assert_eq!(b.bytes(), frame(k as u8, DataType::U8, [1, 1, 32, 1]).bytes());
        }
    }

    #[test]
    fn recent_ten_frames() {
        let cfg = AggregatorConfig::new(1, 10, 1).unwrap();
        let out = run(cfg, 12);
        assert_eq!(out.len(), 3);
        let spec = out[0].caps().as_tensor().unwrap();
        assert_eq!(spec.dim.get(3), 10);
    }

    #[test]
    fn rate_follows_flush() {
        let cfg = AggregatorConfig::new(1, 75, 25).unwrap();
        let spec = TensorSpec::of([1, 1, 32, 1], DataType::F32).with_rate(Framerate::fps(100));
        assert_eq!(cfg.output_spec(&spec).unwrap().framerate, Framerate::fps(4));
    }

    #[test]
    fn invalid_configs() {
        assert!(AggregatorConfig::new(2, 1, 1).is_err());
        assert!(AggregatorConfig::new(1, 4, 5).is_err());
        assert!(AggregatorConfig::new(1, 4, 0).is_err());
    }

    #[test]
    fn multi_frame_input_along_axis_zero() {
        let cfg = AggregatorConfig::new(2, 4, 2).unwrap().along(0);
        let spec = TensorSpec::of([2, 3, 1, 1], DataType::U8);
        let mut a = Aggregator::new(cfg, &spec).unwrap();
        let mk = |v: [u8; 6]| {
            Buffer::new(Arc::new(Caps::Tensor(spec)), Payload::from_vec(v.to_vec()), 0).unwrap()
        };
        assert!(a.push(mk([1, 2, 3, 4, 5, 6])).unwrap().is_empty());
        let out = a.push(mk([7, 8, 9, 10, 11, 12])).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bytes(), &[1, 2, 7, 8, 3, 4, 9, 10, 5, 6, 11, 12]);
        assert_eq!(a.held(), 2);
    }

    proptest! {
        #[test]
        fn count_formula(i in 1u32..4, extra in 0u32..6, f_off in 0u32..6, n in 0usize..40) {
            let o = i + extra;
            let f = 1 + f_off.min(o - 1);
            let cfg = AggregatorConfig::new(i, o, f).unwrap().along(2);
            let spec = TensorSpec::of([1, 1, i, 1], DataType::U8);
            let mut a = Aggregator::new(cfg, &spec).unwrap();
            let mut emitted = 0u64;
            for k in 0..n {
                emitted += a.push(frame(k as u8, DataType::U8, [1, 1, i, 1])).unwrap().len() as u64;
            }
            let frames = n as u64 * i as u64;
            let want = if frames >= o as u64 { (frames - o as u64) / f as u64 + 1 } else { 0 };
            prop_assert_eq!(emitted, want);
            prop_assert_eq!(cfg.output_count(n as u64), want);
        }
    }
}
