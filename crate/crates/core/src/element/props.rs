//! Typed element properties.

use std::collections::BTreeMap;
use std::fmt;

use crate::tensor::{Caps, CapsFilter, DataType, Framerate, TensorDim};

#[derive(Debug, Clone, Copy)]
pub enum PropKind {
    Int { min: i64, max: i64 },
    Float,
    Bool,
    Str,
    /// Allowed values as `(spelling, canonical)` pairs.
    Enum(&'static [(&'static str, &'static str)]),
    /// A checked string; the function returns an error message on bad input.
    Checked(fn(&str) -> Result<(), String>),
}

impl PropKind {
    pub fn type_name(&self) -> String {
        match self {
            PropKind::Int { min, max } => format!("int [{min}, {max}]"),
            PropKind::Float => "float".into(),
            PropKind::Bool => "bool".into(),
            PropKind::Str => "string".into(),
            PropKind::Enum(values) => {
                let mut canon: Vec<&str> = values.iter().map(|(_, c)| *c).collect();
                canon.dedup();
                format!("enum {{{}}}", canon.join("|"))
            }
            PropKind::Checked(_) => "string (checked)".into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PropSpec {
    pub name: &'static str,
    pub aliases: &'static [&'static str],
    pub kind: PropKind,
    pub default: Option<&'static str>,
    pub required: bool,
    pub blurb: &'static str,
}

impl PropSpec {
    pub const fn new(name: &'static str, kind: PropKind, blurb: &'static str) -> Self {
        PropSpec {
            name,
            aliases: &[],
            kind,
            default: None,
            required: false,
            blurb,
        }
    }

    pub const fn default(mut self, value: &'static str) -> Self {
        self.default = Some(value);
        self
    }

    pub const fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub const fn aliases(mut self, aliases: &'static [&'static str]) -> Self {
        self.aliases = aliases;
        self
    }

    pub fn matches(&self, key: &str) -> bool {
        self.name == key || self.aliases.contains(&key)
    }

    /// Converts raw text into a value of this property's type.
    pub fn parse_value(&self, raw: &str) -> Result<PropValue, String> {
        match self.kind {
            PropKind::Int { min, max } => {
                let v: i64 = raw
                    .parse()
                    .map_err(|_| format!("expected an integer, got '{raw}'"))?;
                if v < min || v > max {
                    return Err(format!("{v} outside [{min}, {max}]"));
                }
                Ok(PropValue::Int(v))
            }
            PropKind::Float => raw
                .parse::<f64>()
                .map(PropValue::Float)
                .map_err(|_| format!("expected a number, got '{raw}'")),
            PropKind::Bool => match raw {
                "true" | "1" | "yes" => Ok(PropValue::Bool(true)),
                "false" | "0" | "no" => Ok(PropValue::Bool(false)),
                _ => Err(format!("expected true or false, got '{raw}'")),
            },
            PropKind::Str => Ok(PropValue::Str(raw.to_string())),
            PropKind::Enum(values) => values
                .iter()
                .find(|(spelling, _)| *spelling == raw)
                .map(|(_, canon)| PropValue::Str((*canon).to_string()))
                .ok_or_else(|| format!("'{raw}' is not one of {}", self.kind.type_name())),
            PropKind::Checked(check) => check(raw).map(|_| PropValue::Str(raw.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl fmt::Display for PropValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropValue::Int(v) => write!(f, "{v}"),
            PropValue::Float(v) => write!(f, "{v}"),
            PropValue::Bool(v) => write!(f, "{v}"),
            PropValue::Str(v) => f.write_str(v),
        }
    }
}

/// Property values keyed by canonical name, defaults filled in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Properties {
    values: BTreeMap<String, PropValue>,
}

impl Properties {
    pub fn new() -> Self {
        Self::default()
    }

    /// Explicit values over schema defaults.
    pub fn resolve(schema: &[PropSpec], explicit: &BTreeMap<String, PropValue>) -> Self {
        let mut values = explicit.clone();
        for spec in schema {
            if values.contains_key(spec.name) {
                continue;
            }
            if let Some(d) = spec.default {
                if let Ok(v) = spec.parse_value(d) {
                    values.insert(spec.name.to_string(), v);
                }
            }
        }
        Properties { values }
    }

    pub fn insert(&mut self, key: &str, value: PropValue) {
        self.values.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&PropValue> {
        self.values.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn int(&self, key: &str) -> Option<i64> {
        match self.values.get(key)? {
            PropValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn float(&self, key: &str) -> Option<f64> {
        match self.values.get(key)? {
            PropValue::Float(v) => Some(*v),
            PropValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn bool(&self, key: &str) -> Option<bool> {
        match self.values.get(key)? {
            PropValue::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        match self.values.get(key)? {
            PropValue::Str(v) => Some(v),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &PropValue)> {
        self.values.iter()
    }
}

// Validators shared by several element kinds.

pub fn check_caps(raw: &str) -> Result<(), String> {
    raw.parse::<Caps>().map(|_| ()).map_err(|e| e.to_string())
}

pub fn check_caps_filter(raw: &str) -> Result<(), String> {
    raw.parse::<CapsFilter>().map(|_| ()).map_err(|e| e.to_string())
}

pub fn check_dim(raw: &str) -> Result<(), String> {
    raw.parse::<TensorDim>().map(|_| ()).map_err(|e| e.to_string())
}

pub fn check_dtype(raw: &str) -> Result<(), String> {
    raw.parse::<DataType>().map(|_| ()).map_err(|e| e.to_string())
}

pub fn check_rate(raw: &str) -> Result<(), String> {
    raw.parse::<Framerate>().map(|_| ()).map_err(|e| e.to_string())
}

pub fn check_uint_list(raw: &str) -> Result<(), String> {
    parse_uint_list(raw).map(|_| ())
}

pub fn parse_uint_list(raw: &str) -> Result<Vec<u32>, String> {
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .map_err(|_| format!("bad list entry '{p}' in '{raw}'"))
        })
        .collect()
}

pub const LEAK_VALUES: &[(&str, &str)] = &[
    ("none", "none"),
    ("no", "none"),
    ("0", "none"),
    ("drop_newest", "drop_newest"),
    ("upstream", "drop_newest"),
    ("1", "drop_newest"),
    ("drop_oldest", "drop_oldest"),
    ("downstream", "drop_oldest"),
    ("2", "drop_oldest"),
];
