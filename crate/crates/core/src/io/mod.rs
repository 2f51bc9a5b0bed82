//! Sources and sinks.

mod sinks;
mod sources;

use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::tensor::ClockTime;

pub use sinks::{AppSinkHandle, CountingHandle, FrameRecord};
pub use sources::{generate, AppSrcHandle, Generator};

pub(crate) use sinks::{APPSINK, COUNTING_SINK, FILESINK};
pub(crate) use sources::{APPSRC, MULTIFILESRC, SYNTHETIC_SRC};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("IoError: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("IoError: bad location pattern '{0}': needs exactly one %d hole")]
    Pattern(String),
    #[error("IoError: {path}: {actual} bytes but a frame is {expected}")]
    LengthMismatch { path: String, expected: usize, actual: usize },
    #[error("IoError: {path}: {message}")]
    Framing { path: String, message: String },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A printf-style path with one integer hole (`%d`, `%5d`, `%05d`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationPattern {
    prefix: String,
    suffix: String,
    width: usize,
    zero_pad: bool,
}

impl LocationPattern {
    pub fn parse(pattern: &str) -> Result<Self, IoError> {
        let bad = || IoError::Pattern(pattern.to_string());
        let mut prefix = String::new();
        let mut suffix = String::new();
        let mut hole: Option<(usize, bool)> = None;
        let mut chars = pattern.chars().peekable();
        while let Some(c) = chars.next() {
            let out = if hole.is_some() { &mut suffix } else { &mut prefix };
            if c != '%' {
                out.push(c);
                continue;
            }
            if chars.peek() == Some(&'%') {
                chars.next();
                out.push('%');
                continue;
            }
            if hole.is_some() {
                return Err(bad());
            }
            let mut spec = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                spec.push(*d);
                chars.next();
            }
            if chars.next() != Some('d') {
                return Err(bad());
            }
            let zero_pad = spec.starts_with('0');
            let width = if spec.is_empty() { 0 } else { spec.parse().map_err(|_| bad())? };
            hole = Some((width, zero_pad));
        }
        let (width, zero_pad) = hole.ok_or_else(bad)?;
        Ok(LocationPattern {
            prefix,
            suffix,
            width,
            zero_pad,
        })
    }

    pub fn path(&self, index: u64) -> String {
        let n = if self.zero_pad {
            format!("{index:0w$}", w = self.width)
        } else {
            format!("{index:w$}", w = self.width)
        };
        format!("{}{n}{}", self.prefix, self.suffix)
    }
}

/// Size in bytes of the record header written by a framed filesink.
pub const FRAMED_HEADER: usize = 16;

/// Encodes one framed record: `u64` length, `u64` timestamp, payload.
pub fn framed_record(pts: ClockTime, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAMED_HEADER + payload.len());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&pts.to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Reads every record of a framed file.
pub fn read_framed(path: &Path) -> Result<Vec<(ClockTime, Vec<u8>)>, IoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| IoError::io(path, e))?;
    let mut records = Vec::new();
    let mut rest = &bytes[..];
    while !rest.is_empty() {
        let framing = |message: String| IoError::Framing {
            path: path.display().to_string(),
            message,
        };
        if rest.len() < FRAMED_HEADER {
            return Err(framing(format!("{} trailing bytes", rest.len())));
        }
        let len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        let pts = u64::from_le_bytes(rest[8..16].try_into().expect("8 bytes"));
        let body = &rest[FRAMED_HEADER..];
        if body.len() < len {
            return Err(framing(format!("record of {len} bytes truncated to {}", body.len())));
        }
        records.push((pts, body[..len].to_vec()));
        rest = &body[len..];
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_holes() {
        let p = LocationPattern::parse("in_%03d.dat").unwrap();
        assert_eq!(p.path(7), "in_007.dat");
        assert_eq!(p.path(1234), "in_1234.dat");
        assert_eq!(LocationPattern::parse("f%d").unwrap().path(12), "f12");
        assert_eq!(LocationPattern::parse("a%%b%2d").unwrap().path(3), "a%b 3");
        for bad in ["none", "%d%d", "%s", "x%"] {
            assert!(matches!(LocationPattern::parse(bad), Err(IoError::Pattern(_))), "{bad}");
        }
    }

    #[test]
    fn framed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let mut bytes = framed_record(5, b"abc");
        bytes.extend(framed_record(9, b""));
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(read_framed(&path).unwrap(), vec![(5, b"abc".to_vec()), (9, vec![])]);
        std::fs::write(&path, &bytes[..bytes.len() - 20]).unwrap();
        assert!(matches!(read_framed(&path), Err(IoError::Framing { .. })));
    }
}
