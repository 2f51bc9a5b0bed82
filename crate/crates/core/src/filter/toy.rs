//! A tiny deterministic model format: one dense, softmax or argmax layer.
//!
//! File layout, little-endian: `"TOYM"`, `u32` layer kind (0 dense,
//! 1 softmax, 2 argmax), `u32` in_dim, `u32` out_dim, then for dense only
//! `out_dim * in_dim` float32 weights row-major (`w[o * in_dim + i]`)
//! followed by `out_dim` float32 biases.

use std::path::Path;
use std::sync::Arc;

use crate::tensor::{Buffer, Caps, DataType, Payload, TensorSpec, MAX_EXTENT};

use super::{FilterError, FilterModel, FilterPlugin};

pub const TOY_MAGIC: &[u8; 4] = b"TOYM";
const HEADER: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        in_dim: u32,
        out_dim: u32,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Softmax { n: u32 },
    /// Index of the largest input as one uint32.
    Argmax { n: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    layer: Layer,
}

fn check_extent(what: &str, v: u32) -> Result<(), FilterError> {
    if v == 0 || v > MAX_EXTENT {
        return Err(FilterError::DimOverflow(format!("{what}={v} outside [1, {MAX_EXTENT}]")));
    }
    Ok(())
}

impl ToyModel {
    pub fn dense(in_dim: u32, out_dim: u32, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self, FilterError> {
        check_extent("in_dim", in_dim)?;
        check_extent("out_dim", out_dim)?;
        let n = in_dim as usize * out_dim as usize;
        if weights.len() != n || bias.len() != out_dim as usize {
            return Err(FilterError::FormatError(format!(
                "dense {in_dim}->{out_dim} needs {n} weights and {out_dim} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(ToyModel {
            layer: Layer::Dense {
                in_dim,
                out_dim,
                weights,
                bias,
            },
        })
    }

    pub fn softmax(n: u32) -> Result<Self, FilterError> {
        check_extent("n", n)?;
        Ok(ToyModel {
            layer: Layer::Softmax { n },
        })
    }

    pub fn argmax(n: u32) -> Result<Self, FilterError> {
        check_extent("n", n)?;
        Ok(ToyModel {
            layer: Layer::Argmax { n },
        })
    }

    pub fn layer(&self) -> &Layer {
        &self.layer
    }

    pub fn in_dim(&self) -> u32 {
        match self.layer {
            Layer::Dense { in_dim, .. } => in_dim,
            Layer::Softmax { n } | Layer::Argmax { n } => n,
        }
    }

    pub fn output_spec(&self) -> TensorSpec {
        match self.layer {
            Layer::Dense { out_dim, .. } => TensorSpec::of([1, 1, out_dim, 1], DataType::F32),
            Layer::Softmax { n } => TensorSpec::of([1, 1, n, 1], DataType::F32),
            Layer::Argmax { .. } => TensorSpec::of([1, 1, 1, 1], DataType::U32),
        }
    }

    pub fn input_spec(&self) -> TensorSpec {
        TensorSpec::of([1, 1, self.in_dim(), 1], DataType::F32)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (kind, i, o) = match &self.layer {
            Layer::Dense { in_dim, out_dim, .. } => (0u32, *in_dim, *out_dim),
            Layer::Softmax { n } => (1, *n, *n),
            Layer::Argmax { n } => (2, *n, 1),
        };
        let mut out = TOY_MAGIC.to_vec();
        for v in [kind, i, o] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Layer::Dense { weights, bias, .. } = &self.layer {
            for v in weights.iter().chain(bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FilterError> {
        if bytes.len() < HEADER || &bytes[..4] != TOY_MAGIC {
            return Err(FilterError::FormatError("missing TOYM header".into()));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4 bytes"));
        let (kind, in_dim, out_dim) = (word(1), word(2), word(3));
        let body = &bytes[HEADER..];
        match kind {
            0 => {
                check_extent("in_dim", in_dim)?;
                check_extent("out_dim", out_dim)?;
                let n = in_dim as usize * out_dim as usize;
                let want = (n + out_dim as usize) * 4;
                if body.len() != want {
                    return Err(FilterError::FormatError(format!(
                        "dense {in_dim}->{out_dim} needs {want} bytes of weights, file has {}",
                        body.len()
                    )));
                }
                let floats: Vec<f32> = body
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                let bias = floats[n..].to_vec();
                let mut weights = floats;
                weights.truncate(n);
                ToyModel::dense(in_dim, out_dim, weights, bias)
            }
            1 | 2 => {
                if !body.is_empty() {
                    return Err(FilterError::FormatError(format!("{} trailing bytes", body.len())));
                }
                if kind == 1 {
                    if in_dim != out_dim {
                        return Err(FilterError::FormatError(format!("softmax {in_dim}->{out_dim}")));
                    }
                    ToyModel::softmax(in_dim)
                } else {
                    if out_dim != 1 {
                        return Err(FilterError::FormatError(format!("argmax {in_dim}->{out_dim}")));
                    }
                    ToyModel::argmax(in_dim)
                }
            }
            k => Err(FilterError::FormatError(format!("unknown layer kind {k}"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self, FilterError> {
        let bytes = std::fs::read(path).map_err(|source| FilterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ToyModel::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), FilterError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| FilterError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Runs the layer on a flat input vector.
    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        match &self.layer {
            Layer::Dense {
                in_dim,
                weights,
                bias,
                ..
            } => weights
                .chunks_exact(*in_dim as usize)
                .zip(bias)
                .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| *w as f64 * *v as f64).sum::<f64>() + *b as f64) as f32)
                .collect(),
            Layer::Softmax { .. } => {
                let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
                let e: Vec<f64> = x.iter().map(|v| (*v as f64 - max).exp()).collect();
                let sum: f64 = e.iter().sum();
                e.iter().map(|v| (v / sum) as f32).collect()
            }
            Layer::Argmax { .. } => {
                let mut best = 0;
                for (i, v) in x.iter().enumerate() {
                    if *v > x[best] {
                        best = i;
                    }
                }
                vec![best as f32]
            }
        }
    }
}

/// Flattens a float32 tensor or an all-float32 tensors container.
fn float_inputs(input: &Caps) -> Option<usize> {
    match input {
        Caps::Tensor(s) if s.dtype == DataType::F32 => Some(s.dim.element_count()),
        Caps::Tensors(t) if t.tensors().iter().all(|i| i.dtype == DataType::F32) => {
            Some(t.tensors().iter().map(|i| i.element_count()).sum())
        }
        _ => None,
    }
}

impl FilterModel for ToyModel {
    fn query_io(&self, input: &Caps) -> Result<Caps, FilterError> {
        match float_inputs(input) {
            Some(n) if n == self.in_dim() as usize => Ok(Caps::Tensor(self.output_spec())),
            _ => Err(FilterError::SpecViolation(format!(
                "toy model takes {} float32 values, got {input}",
                self.in_dim()
            ))),
        }
    }

    fn invoke(&self, input: &Buffer, _: &Caps) -> Result<Vec<Payload>, FilterError> {
        let x: Vec<f32> = input
            .memories()
            .iter()
            .flat_map(|m| m.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let y = self.forward(&x);
        let bytes: Vec<u8> = match self.layer {
            Layer::Argmax { .. } => (y[0] as u32).to_le_bytes().to_vec(),
            _ => y.iter().flat_map(|v| v.to_le_bytes()).collect(),
        };
        Ok(vec![Payload::from_vec(bytes)])
    }
}

/// The `toy` framework: the model locator is a path to a toy model file.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyFramework;

impl FilterPlugin for ToyFramework {
    fn framework_name(&self) -> &str {
        "toy"
    }

    fn open(&self, model: &str) -> Result<Arc<dyn FilterModel>, FilterError> {
        Ok(Arc::new(ToyModel::load(Path::new(model))?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f32_buffer(values: &[f32]) -> Buffer {
        let caps = Arc::new(Caps::Tensor(TensorSpec::of([1, 1, values.len() as u32, 1], DataType::F32)));
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Buffer::new(caps, Payload::from_vec(bytes), 0).unwrap()
    }

    fn floats(p: &Payload) -> Vec<f32> {
        p.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
    }

    #[test]
    fn quarter_weights_sum_to_eight() {
        let m = ToyModel::dense(32, 4, vec![0.25; 128], vec![0.0; 4]).unwrap();
        assert_eq!(m.input_spec().dim.extents(), [1, 1, 32, 1]);
        assert_eq!(m.output_spec().dim.extents(), [1, 1, 4, 1]);
        let out = m.invoke(&f32_buffer(&[1.0; 32]), &Caps::Tensor(m.output_spec())).unwrap();
        assert_eq!(floats(&out[0]), vec![8.0; 4]);
    }

    #[test]
    fn file_round_trip_and_header_sizes() {
        let m = ToyModel::dense(32, 4, (0..128).map(|i| i as f32).collect(), vec![1.0; 4]).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 16 + (128 + 4) * 4);
        assert_eq!(ToyModel::from_bytes(&bytes).unwrap(), m);
        assert!(matches!(
            ToyModel::from_bytes(&bytes[..bytes.len() - 3]),
            Err(FilterError::FormatError(_))
        ));
        assert!(matches!(ToyModel::from_bytes(b"TOYX"), Err(FilterError::FormatError(_))));
    }

    #[test]
    fn oversized_header_is_dim_overflow() {
        let mut bytes = TOY_MAGIC.to_vec();
        for v in [0u32, 70_000, 4] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(ToyModel::from_bytes(&bytes), Err(FilterError::DimOverflow(_))));
    }

    #[test]
    fn argmax_layer_is_uint32() {
        let m = ToyModel::argmax(3).unwrap();
        let out = m.invoke(&f32_buffer(&[0.1, 0.9, 0.9]), &Caps::Tensor(m.output_spec())).unwrap();
        assert_eq!(out[0].as_slice(), &1u32.to_le_bytes());
    }

    #[test]
    fn rejects_wrong_input_length() {
        let m = ToyModel::softmax(4).unwrap();
        let caps = Caps::Tensor(TensorSpec::of([1, 1, 5, 1], DataType::F32));
        assert!(m.query_io(&caps).is_err());
    }

    proptest! {
        #[test]
        fn dense_matches_triple_loop(
            (i, o, w, b, x) in (1usize..12, 1usize..8).prop_flat_map(|(i, o)| (
                Just(i), Just(o),
                prop::collection::vec(-4.0f32..4.0, i * o),
                prop::collection::vec(-4.0f32..4.0, o),
                prop::collection::vec(-4.0f32..4.0, i),
            ))
        ) {
            let m = ToyModel::dense(i as u32, o as u32, w.clone(), b.clone()).unwrap();
            let got = m.forward(&x);
            for r in 0..o {
                let mut acc = 0.0f64;
                for c in 0..i {
                    acc += w[r * i + c] as f64 * x[c] as f64;
                }
                let want = acc + b[r] as f64;
                prop_assert!((got[r] as f64 - want).abs() <= 1e-6 * want.abs().max(1.0));
            }
        }

        #[test]
        fn softmax_is_a_distribution(x in prop::collection::vec(-50.0f32..50.0, 1..64)) {
            let m = ToyModel::softmax(x.len() as u32).unwrap();
            let y = m.forward(&x);
            prop_assert!(y.iter().all(|v| *v > 0.0));
            let sum: f64 = y.iter().map(|v| *v as f64).sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }

        #[test]
        fn output_matches_query(n in 1u32..40, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let models = [
                ToyModel::dense(n, 3, (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect(), vec![0.5; 3]).unwrap(),
                ToyModel::softmax(n).unwrap(),
                ToyModel::argmax(n).unwrap(),
            ];
            let input = f32_buffer(&x);
            for m in &models {
                let out = m.query_io(input.caps()).unwrap();
                let mem = m.invoke(&input, &out).unwrap();
                prop_assert_eq!(mem.iter().map(|p| p.len()).sum::<usize>(), out.byte_size().unwrap());
            }
        }
    }
}
