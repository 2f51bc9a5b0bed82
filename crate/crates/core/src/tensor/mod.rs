//! Tensor stream types.
//!
//! A tensor stream carries frames whose layout is described by a
//! [`TensorSpec`] (`other/tensor`) or a [`TensorsSpec`] (`other/tensors`).
//! Extents are stored innermost-first: `dim[0]` varies fastest in memory, so
//! an RGB video frame of width `w` and height `h` is `[3, w, h, 1]`.
//!
//! Both specs have a canonical text form (see [`spec`]) that round-trips
//! through `FromStr`/`Display`.

mod buffer;
mod caps;
mod spec;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use buffer::{global_copy_count, Buffer, ClockTime, CopyScope, Payload, PayloadId};
pub use caps::{AudioFormat, AudioInfo, Caps, CapsFilter, VideoFormat, VideoInfo};
pub use spec::{byte_size, spec_parse, spec_to_string, specs_compatible};

/// Largest extent allowed on any axis.
pub const MAX_EXTENT: u32 = 65535;
/// Number of axes every tensor has.
pub const RANK: usize = 4;
/// Upper bound on the number of tensors in an `other/tensors` container.
pub const MAX_TENSORS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("value out of range: {0}")]
    Range(String),
    #[error("arity mismatch: {0}")]
    Arity(String),
    #[error("payload size {actual} does not match spec size {expected}")]
    SizeMismatch { expected: usize, actual: usize },
}

impl SpecError {
    pub(crate) fn syntax(offset: usize, message: impl Into<String>) -> Self {
        SpecError::Syntax {
            offset,
            message: message.into(),
        }
    }
}

/// Element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataType {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    U64,
    I64,
    F32,
    F64,
}

impl DataType {
    pub const ALL: [DataType; 10] = [
        DataType::U8,
        DataType::I8,
        DataType::U16,
        DataType::I16,
        DataType::U32,
        DataType::I32,
        DataType::U64,
        DataType::I64,
        DataType::F32,
        DataType::F64,
    ];

    /// Width of one element in bytes.
    pub const fn width(self) -> usize {
        match self {
            DataType::U8 | DataType::I8 => 1,
            DataType::U16 | DataType::I16 => 2,
            DataType::U32 | DataType::I32 | DataType::F32 => 4,
            DataType::U64 | DataType::I64 | DataType::F64 => 8,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            DataType::U8 => "uint8",
            DataType::I8 => "int8",
            DataType::U16 => "uint16",
            DataType::I16 => "int16",
            DataType::U32 => "uint32",
            DataType::I32 => "int32",
            DataType::U64 => "uint64",
            DataType::I64 => "int64",
            DataType::F32 => "float32",
            DataType::F64 => "float64",
        }
    }

    pub const fn is_float(self) -> bool {
        matches!(self, DataType::F32 | DataType::F64)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataType {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataType::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| SpecError::syntax(0, format!("unknown tensor type '{s}'")))
    }
}

/// Four extents, innermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorDim(pub [u32; RANK]);

impl TensorDim {
    /// Builds a dimension, checking every extent is in `[1, 65535]`.
    pub fn new(extents: [u32; RANK]) -> Result<Self, SpecError> {
        for (axis, &e) in extents.iter().enumerate() {
            if e == 0 || e > MAX_EXTENT {
                return Err(SpecError::Range(format!(
                    "extent {e} on axis {axis} outside [1, {MAX_EXTENT}]"
                )));
            }
        }
        Ok(TensorDim(extents))
    }

    pub fn extents(&self) -> [u32; RANK] {
        self.0
    }

    pub fn element_count(&self) -> usize {
        self.0.iter().map(|&e| e as usize).product()
    }

    pub fn get(&self, axis: usize) -> u32 {
        self.0[axis]
    }

    /// Copy with `axis` set to `extent`, range-checked.
    pub fn with_axis(&self, axis: usize, extent: u32) -> Result<Self, SpecError> {
        let mut e = self.0;
        e[axis] = extent;
        TensorDim::new(e)
    }
}

impl fmt::Display for TensorDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a}:{b}:{c}:{d}")
    }
}

impl FromStr for TensorDim {
    type Err = SpecError;

    /// Accepts one to four colon-separated extents; missing trailing axes are 1.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() > RANK {
            return Err(SpecError::syntax(
                0,
                format!("dimension '{s}' has more than {RANK} extents"),
            ));
        }
        let mut extents = [1u32; RANK];
        for (i, p) in parts.iter().enumerate() {
            let v: u64 = p
                .parse()
                .map_err(|_| SpecError::syntax(0, format!("bad extent '{p}' in '{s}'")))?;
            extents[i] = u32::try_from(v).unwrap_or(u32::MAX);
            if v == 0 || v > MAX_EXTENT as u64 {
                return Err(SpecError::Range(format!(
                    "extent {v} on axis {i} outside [1, {MAX_EXTENT}]"
                )));
            }
        }
        TensorDim::new(extents)
    }
}

/// Frames per second as a fraction. `0/1` is the wildcard rate.
#[derive(Debug, Clone, Copy)]
pub struct Framerate {
    pub num: u32,
    pub den: u32,
}

impl Framerate {
    pub const WILDCARD: Framerate = Framerate { num: 0, den: 1 };
    pub const MAX_NUM: u32 = i32::MAX as u32;

    pub fn new(num: u32, den: u32) -> Result<Self, SpecError> {
        if den == 0 || den > Self::MAX_NUM {
            return Err(SpecError::Range(format!(
                "framerate denominator {den} outside [1, {}]",
                Self::MAX_NUM
            )));
        }
        if num > Self::MAX_NUM {
            return Err(SpecError::Range(format!(
                "framerate numerator {num} outside [0, {}]",
                Self::MAX_NUM
            )));
        }
        Ok(Framerate { num, den })
    }

    pub fn fps(num: u32) -> Self {
        Framerate { num, den: 1 }
    }

    pub fn is_wildcard(&self) -> bool {
        self.num == 0
    }

    /// Frame period in nanoseconds, `None` for the wildcard rate.
    pub fn period_ns(&self) -> Option<u64> {
        if self.num == 0 {
            None
        } else {
            Some(1_000_000_000u64 * self.den as u64 / self.num as u64)
        }
    }

    /// Timestamp of frame `index` when stamped at this rate.
    pub fn timestamp_of(&self, index: u64) -> Option<ClockTime> {
        if self.num == 0 {
            None
        } else {
            Some((index as u128 * 1_000_000_000u128 * self.den as u128 / self.num as u128) as u64)
        }
    }

    /// Equal rates, or either side is the wildcard.
    pub fn accepts(&self, other: &Framerate) -> bool {
        self.is_wildcard() || other.is_wildcard() || self == other
    }

    fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Smaller of two rates, ignoring wildcards.
    pub fn min_concrete(self, other: Framerate) -> Framerate {
        match (self.is_wildcard(), other.is_wildcard()) {
            (true, _) => other,
            (_, true) => self,
            _ if other.as_f64() < self.as_f64() => other,
            _ => self,
        }
    }

    /// Larger of two rates, ignoring wildcards.
    pub fn max_concrete(self, other: Framerate) -> Framerate {
        match (self.is_wildcard(), other.is_wildcard()) {
            (true, _) => other,
            (_, true) => self,
            _ if other.as_f64() > self.as_f64() => other,
            _ => self,
        }
    }
}

impl Default for Framerate {
    fn default() -> Self {
        Framerate::WILDCARD
    }
}

impl PartialEq for Framerate {
    fn eq(&self, other: &Self) -> bool {
        self.num as u64 * other.den as u64 == other.num as u64 * self.den as u64
    }
}

impl Eq for Framerate {}

impl fmt::Display for Framerate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Framerate {
    type Err = SpecError;

    /// `N/D` or a bare integer `N` (meaning `N/1`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n, d),
            None => (s, "1"),
        };
        let parse = |t: &str| -> Result<u64, SpecError> {
            t.parse::<u64>()
                .map_err(|_| SpecError::syntax(0, format!("bad framerate '{s}'")))
        };
        let (n, d) = (parse(n)?, parse(d)?);
        if n > Framerate::MAX_NUM as u64 || d > Framerate::MAX_NUM as u64 {
            return Err(SpecError::Range(format!("framerate '{s}' out of range")));
        }
        Framerate::new(n as u32, d as u32)
    }
}

/// Layout of one tensor: dimension and element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorInfo {
    pub dim: TensorDim,
    pub dtype: DataType,
}

impl TensorInfo {
    pub fn new(dim: TensorDim, dtype: DataType) -> Self {
        TensorInfo { dim, dtype }
    }

    pub fn byte_size(&self) -> usize {
        self.dim.element_count() * self.dtype.width()
    }

    pub fn element_count(&self) -> usize {
        self.dim.element_count()
    }
}

/// `other/tensor`: one tensor per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorSpec {
    pub dim: TensorDim,
    pub dtype: DataType,
    pub framerate: Framerate,
}

impl TensorSpec {
    pub fn new(dim: TensorDim, dtype: DataType, framerate: Framerate) -> Self {
        TensorSpec {
            dim,
            dtype,
            framerate,
        }
    }

    /// Convenience constructor for tests and examples; panics on bad extents.
    pub fn of(extents: [u32; RANK], dtype: DataType) -> Self {
        TensorSpec::new(
            TensorDim::new(extents).expect("valid extents"),
            dtype,
            Framerate::WILDCARD,
        )
    }

    pub fn info(&self) -> TensorInfo {
        TensorInfo::new(self.dim, self.dtype)
    }

    pub fn byte_size(&self) -> usize {
        self.info().byte_size()
    }

    pub fn with_rate(mut self, framerate: Framerate) -> Self {
        self.framerate = framerate;
        self
    }
}

/// `other/tensors`: up to 16 tensors per frame sharing one framerate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorsSpec {
    tensors: Vec<TensorInfo>,
    pub framerate: Framerate,
}

impl TensorsSpec {
    pub fn new(tensors: Vec<TensorInfo>, framerate: Framerate) -> Result<Self, SpecError> {
        if tensors.is_empty() || tensors.len() > MAX_TENSORS {
            return Err(SpecError::Range(format!(
                "num_tensors {} outside [1, {MAX_TENSORS}]",
                tensors.len()
            )));
        }
        Ok(TensorsSpec { tensors, framerate })
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn num_tensors(&self) -> usize {
        self.tensors.len()
    }

    pub fn byte_size(&self) -> usize {
        self.tensors.iter().map(TensorInfo::byte_size).sum()
    }

    /// The `index`-th member as a standalone `other/tensor` spec.
    pub fn member(&self, index: usize) -> Option<TensorSpec> {
        self.tensors
            .get(index)
            .map(|t| TensorSpec::new(t.dim, t.dtype, self.framerate))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dtype_widths() {
        let widths: Vec<usize> = DataType::ALL.iter().map(|t| t.width()).collect();
        assert_eq!(widths, vec![1, 1, 2, 2, 4, 4, 8, 8, 4, 8]);
        for t in DataType::ALL {
            assert_eq!(t.name().parse::<DataType>().unwrap(), t);
        }
    }

    #[test]
    fn dim_bounds() {
        assert!(TensorDim::new([1, 1, 1, 1]).is_ok());
        assert!(TensorDim::new([65535, 1, 1, 1]).is_ok());
        assert!(matches!(TensorDim::new([0, 1, 1, 1]), Err(SpecError::Range(_))));
        assert!(matches!(
            TensorDim::new([65536, 1, 1, 1]),
            Err(SpecError::Range(_))
        ));
        assert_eq!("3:224".parse::<TensorDim>().unwrap().0, [3, 224, 1, 1]);
        assert!(matches!(
            "1:1:1:1:1".parse::<TensorDim>(),
            Err(SpecError::Syntax { .. })
        ));
    }

    #[test]
    fn framerate_rules() {
        assert_eq!("30/1".parse::<Framerate>().unwrap(), Framerate::fps(30));
        assert_eq!("60/2".parse::<Framerate>().unwrap(), Framerate::fps(30));
        assert!(matches!("1/0".parse::<Framerate>(), Err(SpecError::Range(_))));
        assert!(matches!(
            "2147483648/1".parse::<Framerate>(),
            Err(SpecError::Range(_))
        ));
        assert!("2147483647/1".parse::<Framerate>().is_ok());
        assert!(Framerate::fps(30).accepts(&Framerate::WILDCARD));
        assert!(Framerate::WILDCARD.accepts(&Framerate::fps(30)));
        assert!(!Framerate::fps(30).accepts(&Framerate::fps(15)));
        assert_eq!(Framerate::fps(30).timestamp_of(3), Some(100_000_000));
    }

    #[test]
    fn tensors_bounds() {
        let t = TensorInfo::new(TensorDim([1, 1, 1, 1]), DataType::U8);
        assert!(TensorsSpec::new(vec![], Framerate::WILDCARD).is_err());
        assert!(TensorsSpec::new(vec![t; 16], Framerate::WILDCARD).is_ok());
        assert!(TensorsSpec::new(vec![t; 17], Framerate::WILDCARD).is_err());
    }
}
