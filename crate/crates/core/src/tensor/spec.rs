//! Text form of tensor specs.
//!
//! ```text
//! spec   := "other/tensor," single | "other/tensors," multi
//! single := "dimension=" DIM ",type=" TYPE ",framerate=" RATE
//! multi  := "num_tensors=" INT ",dimensions=" DIM ("." DIM)* ",types=" TYPE ("," TYPE)* ",framerate=" RATE
//! ```
//!
//! Multi-tensor dimensions are joined with `.` because `,` already separates
//! fields. Fields may appear in any order when parsing; `framerate` defaults
//! to `0/1` when absent. Printing always produces the canonical order above.

use super::{Caps, DataType, Framerate, SpecError, TensorDim, TensorInfo, TensorSpec, TensorsSpec};

/// One `key=value` field of a caps string, with the byte offset of the key.
#[derive(Debug, Clone)]
pub(crate) struct Field<'a> {
    pub key: &'a str,
    pub value: String,
    pub offset: usize,
}

/// Splits `media,k=v,k=v` into the media type and its fields.
///
/// A comma-separated piece without `=` continues the previous field's value,
/// which is how `types=uint8,float32` lists are carried.
pub(crate) fn split_fields(text: &str) -> Result<(&str, Vec<Field<'_>>), SpecError> {
    let mut pieces = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if c == ',' {
            pieces.push((start, &text[start..i]));
            start = i + 1;
        }
    }
    pieces.push((start, &text[start..]));

    let (_, media) = pieces[0];
    if media.is_empty() {
        return Err(SpecError::syntax(0, "missing media type"));
    }
    let mut fields: Vec<Field<'_>> = Vec::new();
    for &(offset, piece) in &pieces[1..] {
        if piece.is_empty() {
            return Err(SpecError::syntax(offset, "empty field"));
        }
        match piece.split_once('=') {
            Some((key, value)) => {
                if key.is_empty() {
                    return Err(SpecError::syntax(offset, "field without a name"));
                }
                if fields.iter().any(|f| f.key == key) {
                    return Err(SpecError::syntax(offset, format!("duplicate field '{key}'")));
                }
                fields.push(Field {
                    key,
                    value: value.to_string(),
                    offset,
                });
            }
            None => match fields.last_mut() {
                Some(prev) => {
                    prev.value.push(',');
                    prev.value.push_str(piece);
                }
                None => {
                    return Err(SpecError::syntax(offset, format!("expected key=value, got '{piece}'")))
                }
            },
        }
    }
    Ok((media, fields))
}

fn shift(err: SpecError, base: usize) -> SpecError {
    match err {
        SpecError::Syntax { offset, message } => SpecError::Syntax {
            offset: offset + base,
            message,
        },
        other => other,
    }
}

fn take<'a>(fields: &'a [Field<'a>], key: &str) -> Option<&'a Field<'a>> {
    fields.iter().find(|f| f.key == key)
}

fn require<'a>(fields: &'a [Field<'a>], key: &str, text_len: usize) -> Result<&'a Field<'a>, SpecError> {
    take(fields, key).ok_or_else(|| SpecError::syntax(text_len, format!("missing field '{key}'")))
}

fn reject_unknown(fields: &[Field<'_>], known: &[&str]) -> Result<(), SpecError> {
    match fields.iter().find(|f| !known.contains(&f.key)) {
        Some(f) => Err(SpecError::syntax(f.offset, format!("unknown field '{}'", f.key))),
        None => Ok(()),
    }
}

fn value_offset(f: &Field<'_>) -> usize {
    f.offset + f.key.len() + 1
}

fn parse_rate(fields: &[Field<'_>]) -> Result<Framerate, SpecError> {
    match take(fields, "framerate") {
        Some(f) => f.value.parse::<Framerate>().map_err(|e| shift(e, value_offset(f))),
        None => Ok(Framerate::WILDCARD),
    }
}

pub(crate) fn parse_tensor(fields: &[Field<'_>], len: usize) -> Result<TensorSpec, SpecError> {
    reject_unknown(fields, &["dimension", "type", "framerate"])?;
    let d = require(fields, "dimension", len)?;
    let dim = d.value.parse::<TensorDim>().map_err(|e| shift(e, value_offset(d)))?;
    let t = require(fields, "type", len)?;
    let dtype = t.value.parse::<DataType>().map_err(|e| shift(e, value_offset(t)))?;
    Ok(TensorSpec::new(dim, dtype, parse_rate(fields)?))
}

pub(crate) fn parse_tensors(fields: &[Field<'_>], len: usize) -> Result<TensorsSpec, SpecError> {
    reject_unknown(fields, &["num_tensors", "dimensions", "types", "framerate"])?;
    let n = require(fields, "num_tensors", len)?;
    let num: usize = n
        .value
        .parse()
        .map_err(|_| SpecError::syntax(value_offset(n), format!("bad num_tensors '{}'", n.value)))?;
    if num == 0 || num > super::MAX_TENSORS {
        return Err(SpecError::Range(format!(
            "num_tensors {num} outside [1, {}]",
            super::MAX_TENSORS
        )));
    }
    let d = require(fields, "dimensions", len)?;
    let dims = d
        .value
        .split('.')
        .map(|s| s.parse::<TensorDim>().map_err(|e| shift(e, value_offset(d))))
        .collect::<Result<Vec<_>, _>>()?;
    let t = require(fields, "types", len)?;
    let types = t
        .value
        .split(',')
        .map(|s| s.parse::<DataType>().map_err(|e| shift(e, value_offset(t))))
        .collect::<Result<Vec<_>, _>>()?;
    if dims.len() != num || types.len() != num {
        return Err(SpecError::Arity(format!(
            "num_tensors={num} but {} dimensions and {} types",
            dims.len(),
            types.len()
        )));
    }
    let tensors = dims
        .into_iter()
        .zip(types)
        .map(|(dim, dtype)| TensorInfo::new(dim, dtype))
        .collect();
    TensorsSpec::new(tensors, parse_rate(fields)?)
}

/// Parses an `other/tensor` or `other/tensors` spec string.
pub fn spec_parse(text: &str) -> Result<Caps, SpecError> {
    let (media, fields) = split_fields(text)?;
    match media {
        "other/tensor" => Ok(Caps::Tensor(parse_tensor(&fields, text.len())?)),
        "other/tensors" => Ok(Caps::Tensors(parse_tensors(&fields, text.len())?)),
        other => Err(SpecError::syntax(0, format!("'{other}' is not a tensor spec"))),
    }
}

/// Canonical text of a tensor or tensors spec.
pub fn spec_to_string(caps: &Caps) -> String {
    caps.to_string()
}

pub(crate) fn fmt_tensor(s: &TensorSpec) -> String {
    format!(
        "other/tensor,dimension={},type={},framerate={}",
        s.dim, s.dtype, s.framerate
    )
}

pub(crate) fn fmt_tensors(s: &TensorsSpec) -> String {
    let dims: Vec<String> = s.tensors().iter().map(|t| t.dim.to_string()).collect();
    let types: Vec<&str> = s.tensors().iter().map(|t| t.dtype.name()).collect();
    format!(
        "other/tensors,num_tensors={},dimensions={},types={},framerate={}",
        s.num_tensors(),
        dims.join("."),
        types.join(","),
        s.framerate
    )
}

/// Link-time compatibility: same kind, equal dims and types, and equal
/// framerates unless either side is the `0/1` wildcard.
pub fn specs_compatible(a: &Caps, b: &Caps) -> bool {
    a.is_compatible(b)
}

/// Bytes per frame for a tensor spec (summed across members of a container).
pub fn byte_size(caps: &Caps) -> usize {
    caps.byte_size().unwrap_or(0)
}
