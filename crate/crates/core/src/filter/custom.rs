//! In-process models registered by key.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use crate::tensor::{Buffer, Caps, DataType, Payload};

use super::{FilterError, FilterModel, FilterPlugin};

/// A framework whose models are Rust values looked up by key.
pub struct CustomFramework {
    name: String,
    models: RwLock<BTreeMap<String, Arc<dyn FilterModel>>>,
}

impl CustomFramework {
    pub fn new(name: impl Into<String>) -> Self {
        CustomFramework {
            name: name.into(),
            models: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn add(&self, key: &str, model: impl FilterModel + 'static) -> Result<(), FilterError> {
        let mut models = self.models.write().expect("model lock");
        if models.contains_key(key) {
            return Err(FilterError::PluginFailure(format!("{}: model '{key}' already added", self.name)));
        }
        models.insert(key.to_string(), Arc::new(model));
        Ok(())
    }

    pub fn keys(&self) -> Vec<String> {
        self.models.read().expect("model lock").keys().cloned().collect()
    }
}

impl FilterPlugin for CustomFramework {
    fn framework_name(&self) -> &str {
        &self.name
    }

    fn open(&self, model: &str) -> Result<Arc<dyn FilterModel>, FilterError> {
        self.models
            .read()
            .expect("model lock")
            .get(model)
            .cloned()
            .ok_or_else(|| FilterError::UnknownModel(format!("{}: no model '{model}'", self.name)))
    }
}

type QueryFn = dyn Fn(&Caps) -> Result<Caps, FilterError> + Send + Sync;
type InvokeFn = dyn Fn(&Buffer, &Caps) -> Result<Vec<Payload>, FilterError> + Send + Sync;

/// A model made of two closures.
pub struct FnModel {
    label: &'static str,
    query: Box<QueryFn>,
    invoke: Box<InvokeFn>,
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnModel({})", self.label)
    }
}

impl FnModel {
    pub fn new(
        label: &'static str,
        query: impl Fn(&Caps) -> Result<Caps, FilterError> + Send + Sync + 'static,
        invoke: impl Fn(&Buffer, &Caps) -> Result<Vec<Payload>, FilterError> + Send + Sync + 'static,
    ) -> Self {
        FnModel {
            label,
            query: Box::new(query),
            invoke: Box::new(invoke),
        }
    }

    /// Passes memories through untouched.
    pub fn identity() -> Self {
        FnModel::new("identity", |c| Ok(c.clone()), |b, _| Ok(b.memories().to_vec()))
    }

    /// Identity after spinning the CPU for `work`.
    pub fn busy(work: Duration) -> Self {
        FnModel::new(
            "busy",
            |c| Ok(c.clone()),
            move |b, _| {
                spin(work);
                Ok(b.memories().to_vec())
            },
        )
    }

    /// Identity after sleeping for `delay`.
    pub fn slow(delay: Duration) -> Self {
        FnModel::new(
            "slow",
            |c| Ok(c.clone()),
            move |b, _| {
                std::thread::sleep(delay);
                Ok(b.memories().to_vec())
            },
        )
    }

    /// Applies `f` to every element of a float32 tensor into a new payload.
    pub fn map_f32(f: impl Fn(f32) -> f32 + Send + Sync + 'static) -> Self {
        FnModel::new("map_f32", require_f32, move |b, _| {
            let out: Vec<u8> = b
                .bytes()
                .chunks_exact(4)
                .flat_map(|c| f(f32::from_le_bytes([c[0], c[1], c[2], c[3]])).to_le_bytes())
                .collect();
            Ok(vec![Payload::from_vec(out)])
        })
    }

    /// Applies `f` to the frame bytes in place. A shared payload is copied
    /// first, so other holders never observe the write.
    pub fn in_place(f: impl Fn(&mut [u8]) + Send + Sync + 'static) -> Self {
        FnModel::new(
            "in_place",
            |c| Ok(c.clone()),
            move |b, _| {
                let mut memories = b.memories().to_vec();
                f(memories[0].make_mut());
                Ok(memories)
            },
        )
    }
}

impl FilterModel for FnModel {
    fn query_io(&self, input: &Caps) -> Result<Caps, FilterError> {
        (self.query)(input)
    }

    fn invoke(&self, input: &Buffer, output: &Caps) -> Result<Vec<Payload>, FilterError> {
        (self.invoke)(input, output)
    }
}

fn require_f32(c: &Caps) -> Result<Caps, FilterError> {
    match c.as_tensor() {
        Some(s) if s.dtype == DataType::F32 => Ok(c.clone()),
        _ => Err(FilterError::SpecViolation(format!("expected a float32 tensor, got {c}"))),
    }
}

fn spin(work: Duration) {
    let start = Instant::now();
    let mut x = 0u64;
    while start.elapsed() < work {
        for i in 0..1000u64 {
            x = std::hint::black_box(x.wrapping_mul(6364136223846793005).wrapping_add(i));
        }
    }
    std::hint::black_box(x);
}
