//! Element-wise and structural tensor operators.

use std::fmt;
use std::str::FromStr;

use crate::tensor::{Buffer, DataType, TensorDim, TensorSpec, RANK};

use super::TransformError;

pub const STD_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Typecast(DataType),
    Add(f64),
    Mul(f64),
    Div(f64),
    /// Output axis `i` takes input axis `perm[i]`.
    Transpose([usize; RANK]),
    /// `(x - mean) / max(stddev, 1e-10)` over the whole frame.
    Standardize,
    /// Linear map of the frame's range onto `[min, max]`.
    Normalize { min: f64, max: f64 },
    /// Nearest-neighbour resampling of axes 1 (width) and 2 (height).
    ResizeNn { width: u32, height: u32 },
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Typecast(t) => write!(f, "typecast:{t}"),
            Step::Add(v) => write!(f, "add:{v}"),
            Step::Mul(v) => write!(f, "mul:{v}"),
            Step::Div(v) => write!(f, "div:{v}"),
            Step::Transpose([a, b, c, d]) => write!(f, "transpose:{a}:{b}:{c}:{d}"),
            Step::Standardize => f.write_str("stand"),
            Step::Normalize { min, max } => write!(f, "normalize:{min}:{max}"),
            Step::ResizeNn { width, height } => write!(f, "resize:{width}:{height}"),
        }
    }
}

fn bad(msg: impl Into<String>) -> TransformError {
    TransformError::ChainSpecError(msg.into())
}

fn scalar(raw: &str) -> Result<f64, TransformError> {
    let v: f64 = raw.parse().map_err(|_| bad(format!("'{raw}' is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("'{raw}' is not finite")))
    }
}

fn parse_perm(raw: &str) -> Result<[usize; RANK], TransformError> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != RANK {
        return Err(bad(format!("transpose needs {RANK} axes, got '{raw}'")));
    }
    let mut perm = [0; RANK];
    let mut seen = [false; RANK];
    for (i, p) in parts.iter().enumerate() {
        let a: usize = p.parse().map_err(|_| bad(format!("bad axis '{p}' in '{raw}'")))?;
        if a >= RANK || seen[a] {
            return Err(bad(format!("'{raw}' is not a permutation of 0..{RANK}")));
        }
        seen[a] = true;
        perm[i] = a;
    }
    Ok(perm)
}

fn parse_pair(raw: &str, what: &str) -> Result<(f64, f64), TransformError> {
    let (a, b) = raw
        .split_once(':')
        .ok_or_else(|| bad(format!("{what} needs two values, got '{raw}'")))?;
    Ok((scalar(a)?, scalar(b)?))
}

impl FromStr for Step {
    type Err = TransformError;

    /// `op[:args]`, e.g. `add:-127.5` or `transpose:0:2:1:3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (op, arg) = match s.split_once(':') {
            Some((op, arg)) => (op, Some(arg)),
            None => (s, None),
        };
        let need = || arg.ok_or_else(|| bad(format!("'{op}' needs an argument")));
        match op {
            "typecast" => need()?
                .parse()
                .map(Step::Typecast)
                .map_err(|_| bad(format!("unknown type '{}'", arg.unwrap_or_default()))),
            "add" => Ok(Step::Add(scalar(need()?)?)),
            "mul" => Ok(Step::Mul(scalar(need()?)?)),
            "div" => {
                let v = scalar(need()?)?;
                if v == 0.0 {
                    return Err(bad("division by zero"));
                }
                Ok(Step::Div(v))
            }
            "transpose" => Ok(Step::Transpose(parse_perm(need()?)?)),
            "stand" | "standardize" if arg.is_none() || arg == Some("default") => Ok(Step::Standardize),
            "normalize" => {
                let (min, max) = match arg {
                    Some(a) => parse_pair(a, "normalize")?,
                    None => (0.0, 1.0),
                };
                if min > max {
                    return Err(bad(format!("normalize range {min}:{max} is reversed")));
                }
                Ok(Step::Normalize { min, max })
            }
            "resize" => {
                let (w, h) = parse_pair(need()?, "resize")?;
                let ok = |v: f64| v >= 1.0 && v <= crate::tensor::MAX_EXTENT as f64 && v.fract() == 0.0;
                if !ok(w) || !ok(h) {
                    return Err(bad(format!("resize target {w}x{h} is not a valid extent pair")));
                }
                Ok(Step::ResizeNn {
                    width: w as u32,
                    height: h as u32,
                })
            }
            _ => Err(bad(format!("unknown operator '{s}'"))),
        }
    }
}

/// An ordered, non-empty list of steps applied to every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformChain {
    steps: Vec<Step>,
}

impl TransformChain {
    pub fn new(steps: Vec<Step>) -> Result<Self, TransformError> {
        if steps.is_empty() {
            return Err(bad("empty transform chain"));
        }
        Ok(TransformChain { steps })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Builds a chain from the element's `mode` and `option` properties.
    pub fn from_mode(mode: &str, option: Option<&str>) -> Result<Self, TransformError> {
        let steps = match mode {
            "arithmetic" | "arith" | "chain" => {
                let option = option.ok_or_else(|| bad(format!("mode={mode} needs an option")))?;
                option
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<Vec<Step>, _>>()?
            }
            "typecast" => vec![format!("typecast:{}", option.unwrap_or_default()).parse()?],
            "transpose" => vec![Step::Transpose(parse_perm(
                option.ok_or_else(|| bad("mode=transpose needs option=a:b:c:d"))?,
            )?)],
            "stand" | "standardize" => vec![Step::Standardize],
            "normalize" => match option {
                Some(o) => vec![format!("normalize:{o}").parse()?],
                None => vec![Step::Normalize { min: 0.0, max: 1.0 }],
            },
            "resize" => vec![format!("resize:{}", option.unwrap_or_default()).parse()?],
            _ => return Err(bad(format!("unknown mode '{mode}'"))),
        };
        TransformChain::new(steps)
    }

    /// Type of the output frame for a given input frame type.
    pub fn output_spec(&self, input: &TensorSpec) -> Result<TensorSpec, TransformError> {
        let mut spec = *input;
        for step in &self.steps {
            spec = step_spec(step, &spec)?;
        }
        Ok(spec)
    }

    /// Applies every step to raw frame bytes of type `input`.
    pub fn apply_bytes(&self, input: &TensorSpec, bytes: &[u8]) -> Result<(TensorSpec, Vec<u8>), TransformError> {
        let mut spec = *input;
        let mut data = bytes.to_vec();
        for step in &self.steps {
            let next = step_spec(step, &spec)?;
            data = apply_step(step, &spec, &next, &data);
            spec = next;
        }
        Ok((spec, data))
    }
}

impl fmt::Display for TransformChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.steps.iter().map(Step::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Runs `chain` over one tensor buffer. Stamp and sequence number are kept.
pub fn transform(buffer: &Buffer, chain: &TransformChain) -> Result<Buffer, TransformError> {
    let input = buffer
        .caps()
        .as_tensor()
        .ok_or_else(|| TransformError::SpecMismatch(format!("cannot transform {}", buffer.caps())))?;
    let (spec, bytes) = chain.apply_bytes(input, buffer.bytes())?;
    let caps = std::sync::Arc::new(crate::tensor::Caps::Tensor(spec));
    Ok(Buffer::new(caps, crate::tensor::Payload::from_vec(bytes), buffer.pts)?.with_seq(buffer.seq))
}

fn float_of(dtype: DataType) -> DataType {
    if dtype == DataType::F64 {
        DataType::F64
    } else {
        DataType::F32
    }
}

fn step_spec(step: &Step, s: &TensorSpec) -> Result<TensorSpec, TransformError> {
    let mut out = *s;
    match *step {
        Step::Typecast(t) => out.dtype = t,
        Step::Add(_) | Step::Mul(_) | Step::Div(_) => {}
        Step::Transpose(perm) => {
            let e = s.dim.extents();
            out.dim = TensorDim::new([e[perm[0]], e[perm[1]], e[perm[2]], e[perm[3]]])?;
        }
        Step::Standardize | Step::Normalize { .. } => out.dtype = float_of(s.dtype),
        Step::ResizeNn { width, height } => {
            out.dim = s.dim.with_axis(1, width)?.with_axis(2, height)?;
        }
    }
    Ok(out)
}

// Element access. All tensors are little-endian, densely packed.

pub(crate) fn read_f64(bytes: &[u8], dtype: DataType) -> Vec<f64> {
    let w = dtype.width();
    bytes
        .chunks_exact(w)
        .map(|c| match dtype {
            DataType::U8 => c[0] as f64,
            DataType::I8 => c[0] as i8 as f64,
            DataType::U16 => u16::from_le_bytes([c[0], c[1]]) as f64,
            DataType::I16 => i16::from_le_bytes([c[0], c[1]]) as f64,
            DataType::U32 => u32::from_le_bytes(c.try_into().expect("width 4")) as f64,
            DataType::I32 => i32::from_le_bytes(c.try_into().expect("width 4")) as f64,
            DataType::U64 => u64::from_le_bytes(c.try_into().expect("width 8")) as f64,
            DataType::I64 => i64::from_le_bytes(c.try_into().expect("width 8")) as f64,
            DataType::F32 => f32::from_le_bytes(c.try_into().expect("width 4")) as f64,
            DataType::F64 => f64::from_le_bytes(c.try_into().expect("width 8")),
        })
        .collect()
}

pub(crate) fn read_i128(bytes: &[u8], dtype: DataType) -> Vec<i128> {
    let w = dtype.width();
    bytes
        .chunks_exact(w)
        .map(|c| match dtype {
            DataType::U8 => c[0] as i128,
            DataType::I8 => c[0] as i8 as i128,
            DataType::U16 => u16::from_le_bytes([c[0], c[1]]) as i128,
            DataType::I16 => i16::from_le_bytes([c[0], c[1]]) as i128,
            DataType::U32 => u32::from_le_bytes(c.try_into().expect("width 4")) as i128,
            DataType::I32 => i32::from_le_bytes(c.try_into().expect("width 4")) as i128,
            DataType::U64 => u64::from_le_bytes(c.try_into().expect("width 8")) as i128,
            DataType::I64 => i64::from_le_bytes(c.try_into().expect("width 8")) as i128,
            DataType::F32 | DataType::F64 => unreachable!("integer path only"),
        })
        .collect()
}

fn int_range(dtype: DataType) -> (i128, i128) {
    match dtype {
        DataType::U8 => (0, u8::MAX as i128),
        DataType::I8 => (i8::MIN as i128, i8::MAX as i128),
        DataType::U16 => (0, u16::MAX as i128),
        DataType::I16 => (i16::MIN as i128, i16::MAX as i128),
        DataType::U32 => (0, u32::MAX as i128),
        DataType::I32 => (i32::MIN as i128, i32::MAX as i128),
        DataType::U64 => (0, u64::MAX as i128),
        DataType::I64 => (i64::MIN as i128, i64::MAX as i128),
        DataType::F32 | DataType::F64 => (i128::MIN, i128::MAX),
    }
}

/// Writes integers, saturating at the target range.
pub(crate) fn write_i128(values: &[i128], dtype: DataType) -> Vec<u8> {
    let (lo, hi) = int_range(dtype);
    let mut out = Vec::with_capacity(values.len() * dtype.width());
    for &v in values {
        let v = v.clamp(lo, hi);
        match dtype {
            DataType::U8 => out.push(v as u8),
            DataType::I8 => out.push(v as i8 as u8),
            DataType::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            DataType::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            DataType::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
            DataType::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            DataType::U64 => out.extend_from_slice(&(v as u64).to_le_bytes()),
            DataType::I64 => out.extend_from_slice(&(v as i64).to_le_bytes()),
            DataType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            DataType::F64 => out.extend_from_slice(&(v as f64).to_le_bytes()),
        }
    }
    out
}

/// Writes reals. Integer targets take the value rounded (or truncated)
/// toward an integer and saturated; NaN becomes 0.
pub(crate) fn write_f64(values: &[f64], dtype: DataType, round: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * dtype.width());
    for &v in values {
        let v = if dtype.is_float() || !round { v } else { v.round() };
        // `as` from float to integer saturates and truncates toward zero.
        match dtype {
            DataType::U8 => out.push(v as u8),
            DataType::I8 => out.push(v as i8 as u8),
            DataType::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            DataType::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            DataType::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
            DataType::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            DataType::U64 => out.extend_from_slice(&(v as u64).to_le_bytes()),
            DataType::I64 => out.extend_from_slice(&(v as i64).to_le_bytes()),
            DataType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            DataType::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

/// Scalar usable on the exact integer path.
fn integral(v: f64) -> Option<i128> {
    (v.fract() == 0.0 && v.abs() < 1e30).then_some(v as i128)
}

fn arith(dtype: DataType, bytes: &[u8], step: &Step) -> Vec<u8> {
    let (op, v): (fn(i128, i128) -> i128, f64) = match *step {
        Step::Add(v) => (i128::saturating_add, v),
        Step::Mul(v) => (i128::saturating_mul, v),
        Step::Div(v) => (|a, b| a / b, v),
        _ => unreachable!("arithmetic steps only"),
    };
    if !dtype.is_float() {
        let exact = match *step {
            Step::Div(_) => None,
            _ => integral(v),
        };
        if let Some(s) = exact {
            let vals: Vec<i128> = read_i128(bytes, dtype).into_iter().map(|x| op(x, s)).collect();
            return write_i128(&vals, dtype);
        }
    }
    let vals: Vec<f64> = read_f64(bytes, dtype)
        .into_iter()
        .map(|x| match *step {
            Step::Add(_) => x + v,
            Step::Mul(_) => x * v,
            _ => x / v,
        })
        .collect();
    write_f64(&vals, dtype, true)
}

fn typecast(from: DataType, to: DataType, bytes: &[u8]) -> Vec<u8> {
    if from == to {
        return bytes.to_vec();
    }
    if !from.is_float() {
        return write_i128(&read_i128(bytes, from), to);
    }
    write_f64(&read_f64(bytes, from), to, false)
}

pub(crate) fn transpose_bytes(bytes: &[u8], dim: [u32; RANK], width: usize, perm: [usize; RANK]) -> Vec<u8> {
    let e: [usize; RANK] = dim.map(|x| x as usize);
    let mut stride_in = [0usize; RANK];
    let mut acc = 1;
    for a in 0..RANK {
        stride_in[a] = acc;
        acc *= e[a];
    }
    let out_e: [usize; RANK] = [e[perm[0]], e[perm[1]], e[perm[2]], e[perm[3]]];
    // Input stride of each output axis.
    let s: [usize; RANK] = [stride_in[perm[0]], stride_in[perm[1]], stride_in[perm[2]], stride_in[perm[3]]];
    let mut out = Vec::with_capacity(bytes.len());
    for d in 0..out_e[3] {
        for c in 0..out_e[2] {
            for b in 0..out_e[1] {
                let base = d * s[3] + c * s[2] + b * s[1];
                for a in 0..out_e[0] {
                    let o = (base + a * s[0]) * width;
                    out.extend_from_slice(&bytes[o..o + width]);
                }
            }
        }
    }
    out
}

/// Nearest-neighbour resampling of axes 1 and 2: output index `x` reads
/// input index `floor(x * in / out)`.
pub fn resize_nn(bytes: &[u8], dim: [u32; RANK], width: usize, new_w: u32, new_h: u32) -> Vec<u8> {
    let [c, w, h, n] = dim.map(|x| x as usize);
    let (nw, nh) = (new_w as usize, new_h as usize);
    let px = c * width;
    let mut out = Vec::with_capacity(px * nw * nh * n);
    for b in 0..n {
        for y in 0..nh {
            let sy = y * h / nh;
            for x in 0..nw {
                let sx = x * w / nw;
                let o = ((b * h + sy) * w + sx) * px;
                out.extend_from_slice(&bytes[o..o + px]);
            }
        }
    }
    out
}

fn apply_step(step: &Step, input: &TensorSpec, output: &TensorSpec, bytes: &[u8]) -> Vec<u8> {
    match *step {
        Step::Typecast(t) => typecast(input.dtype, t, bytes),
        Step::Add(_) | Step::Mul(_) | Step::Div(_) => arith(input.dtype, bytes, step),
        Step::Transpose(perm) => transpose_bytes(bytes, input.dim.extents(), input.dtype.width(), perm),
        Step::Standardize => {
            let x = read_f64(bytes, input.dtype);
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt().max(STD_EPSILON);
            let y: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
            write_f64(&y, output.dtype, false)
        }
        Step::Normalize { min, max } => {
            let x = read_f64(bytes, input.dtype);
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let y: Vec<f64> = if hi > lo {
                x.iter().map(|v| min + (v - lo) * (max - min) / (hi - lo)).collect()
            } else {
                vec![min; x.len()]
            };
            write_f64(&y, output.dtype, false)
        }
        Step::ResizeNn { width, height } => {
            resize_nn(bytes, input.dim.extents(), input.dtype.width(), width, height)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(chain: &str, dtype: DataType, bytes: Vec<u8>) -> (TensorSpec, Vec<u8>) {
        let c = TransformChain::from_mode("arithmetic", Some(chain)).unwrap();
        let n = (bytes.len() / dtype.width()) as u32;
        c.apply_bytes(&TensorSpec::of([n, 1, 1, 1], dtype), &bytes).unwrap()
    }

    #[test]
    fn mtcnn_preprocessing() {
        let (spec, out) = run("typecast:float32,add:-127.5,mul:0.0078125", DataType::U8, vec![200]);
        assert_eq!(spec.dtype, DataType::F32);
        assert_eq!(f32::from_le_bytes(out[..4].try_into().unwrap()), 0.56640625);
    }

    #[test]
    fn literal_without_point_is_not_rewritten() {
        let s: Step = "mul:0078125".parse().unwrap();
        assert_eq!(s, Step::Mul(78125.0));
        assert_eq!(".0078125".parse::<Step>().ok(), None);
        assert_eq!("mul:.0078125".parse::<Step>().unwrap(), Step::Mul(0.0078125));
    }

    #[test]
    fn integer_arithmetic_saturates() {
        assert_eq!(run("add:100", DataType::U8, vec![200, 10]).1, vec![255, 110]);
        assert_eq!(run("mul:-1", DataType::U8, vec![5]).1, vec![0]);
        assert_eq!(run("mul:0.5", DataType::U8, vec![5]).1, vec![3]);
        let (_, out) = run("typecast:int8", DataType::I32, (-300i32).to_le_bytes().to_vec());
        assert_eq!(out, vec![(-128i8) as u8]);
    }

    #[test]
    fn float_to_int_cast_truncates_and_saturates() {
        let bytes: Vec<u8> = [1.9f32, -1.9, 1e10, f32::NAN].iter().flat_map(|v| v.to_le_bytes()).collect();
        let (_, out) = run("typecast:int16", DataType::F32, bytes);
        let got: Vec<i16> = out.chunks(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        assert_eq!(got, vec![1, -1, i16::MAX, 0]);
    }

    #[test]
    fn bad_chains() {
        assert!(matches!(TransformChain::new(vec![]), Err(TransformError::ChainSpecError(_))));
        assert!(TransformChain::from_mode("arithmetic", Some("add")).is_err());
        assert!(TransformChain::from_mode("arithmetic", Some("pow:2")).is_err());
        assert!(TransformChain::from_mode("transpose", Some("0:1:1:3")).is_err());
        assert!(TransformChain::from_mode("warp", None).is_err());
        assert!(TransformChain::from_mode("arithmetic", Some("div:0")).is_err());
    }

    #[test]
    fn transpose_swaps_width_and_height() {
        let c = TransformChain::from_mode("transpose", Some("0:2:1:3")).unwrap();
        let spec = TensorSpec::of([3, 640, 480, 1], DataType::U8);
        assert_eq!(c.output_spec(&spec).unwrap().dim.extents(), [3, 480, 640, 1]);
    }

    #[test]
    fn standardize_constant_is_zero() {
        let c = TransformChain::from_mode("stand", None).unwrap();
        let bytes: Vec<u8> = [4.0f32; 8].iter().flat_map(|v| v.to_le_bytes()).collect();
        let (spec, out) = c.apply_bytes(&TensorSpec::of([8, 1, 1, 1], DataType::F32), &bytes).unwrap();
        assert_eq!(spec.dtype, DataType::F32);
        assert!(out.iter().all(|&b| b == 0));
    }

    #[test]
    fn normalize_range() {
        let c = TransformChain::from_mode("normalize", Some("-1:1")).unwrap();
        let (spec, out) = c.apply_bytes(&TensorSpec::of([3, 1, 1, 1], DataType::U8), &[0, 5, 10]).unwrap();
        assert_eq!(spec.dtype, DataType::F32);
        let y: Vec<f32> = out.chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(y, vec![-1.0, 0.0, 1.0]);
        let (_, flat) = c.apply_bytes(&TensorSpec::of([2, 1, 1, 1], DataType::U8), &[7, 7]).unwrap();
        assert_eq!(f32::from_le_bytes(flat[..4].try_into().unwrap()), -1.0);
    }

    #[test]
    fn resize_same_size_is_identity() {
        let bytes: Vec<u8> = (0..3 * 4 * 5).map(|x| x as u8).collect();
        assert_eq!(resize_nn(&bytes, [3, 4, 5, 1], 1, 4, 5), bytes);
        let half = resize_nn(&bytes, [1, 4, 2, 1], 1, 2, 1);
        assert_eq!(half, vec![0, 2]);
    }

    #[test]
    fn display_round_trips() {
        let c = TransformChain::from_mode("arithmetic", Some("typecast:float32,add:-127.5,transpose:0:2:1:3,stand")).unwrap();
        let again = TransformChain::from_mode("arithmetic", Some(&c.to_string())).unwrap();
        assert_eq!(c, again);
    }
}
