//! Generated inputs shared by examples, tests, benchmarks and the CLI:
//! UWB-like record files, toy model files and the reference pipeline
//! descriptions built on them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::filter::{FilterError, ToyModel};

/// Floats per UWB-like record.
pub const UWB_VALUES: u32 = 32;
/// Elements of one DVS-like frame.
pub const DVS_VALUES: u32 = 16;

/// Writes `count` files of 32 float32 values each, named `<prefix>_0000.dat`
/// onwards. Returns the `%04d` location pattern.
pub fn write_uwb_files(dir: &Path, prefix: &str, count: u64, seed: u64) -> std::io::Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let bytes: Vec<u8> = (0..UWB_VALUES)
            .flat_map(|k| {
                let wave = ((i as f32) * 0.05 + k as f32 * 0.3).sin();
                (wave + rng.random_range(-0.25f32..0.25)).to_le_bytes()
            })
            .collect();
        std::fs::write(dir.join(format!("{prefix}_{i:04}.dat")), bytes)?;
    }
    Ok(dir.join(format!("{prefix}_%04d.dat")).display().to_string())
}

/// A dense layer with reproducible small weights.
pub fn seeded_dense(in_dim: u32, out_dim: u32, seed: u64) -> Result<ToyModel, FilterError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (in_dim as f32).sqrt();
    let weights = (0..in_dim * out_dim).map(|_| rng.random_range(-scale..scale)).collect();
    let bias = (0..out_dim).map(|_| rng.random_range(-0.1f32..0.1)).collect();
    ToyModel::dense(in_dim, out_dim, weights, bias)
}

/// Files and description of the sensor-fusion pipeline.
#[derive(Debug, Clone)]
pub struct ArsFixture {
    pub dir: PathBuf,
    pub frames: u64,
    pub description: String,
}

/// Element and link totals of [`ArsFixture::description`].
pub const ARS_ELEMENTS: usize = 19;
/// `!` links between two elements.
pub const ARS_CHAIN_LINKS: usize = 14;
/// Links into `mux.sink_N` / `merge.sink_N`.
pub const ARS_PAD_LINKS: usize = 4;

/// Writes UWB records and toy models into `dir` and returns a description
/// of the sensor-fusion pipeline: a DVS-like branch through two aggregators
/// and two models, two UWB branches standardized and merged into a third
/// model, all muxed into a logging sink named `out`.
pub fn ars(dir: &Path, frames: u64, seed: u64) -> Result<ArsFixture, FilterError> {
    let io = |e: std::io::Error| FilterError::Io {
        path: dir.display().to_string(),
        source: e,
    };
    let uwb0 = write_uwb_files(dir, "uwb0", frames, seed).map_err(io)?;
    let uwb1 = write_uwb_files(dir, "uwb1", frames, seed ^ 0x5eed).map_err(io)?;
    let model = |name: &str, m: ToyModel| -> Result<String, FilterError> {
        let path = dir.join(name);
        m.write(&path)?;
        Ok(path.display().to_string())
    };
    let cnn = model("cnn.toym", seeded_dense(DVS_VALUES * 8, 16, seed)?)?;
    let lstm = model("lstm.toym", seeded_dense(16 * 12, 4, seed + 1)?)?;
    let uwb = model("uwb.toym", seeded_dense(2 * UWB_VALUES * 75, 4, seed + 2)?)?;

    let mut d = String::new();
    let _ = writeln!(d, "tensor_mux name=mux sync-mode=slowest ! counting_sink name=out log=true");
    let _ = writeln!(
        d,
        "synthetic_src name=dvs caps=\"other/tensor,dimension=1:1:{DVS_VALUES}:1,type=uint8,framerate=30/1\" \
         pattern=random:{seed} frames={frames} sync=false"
    );
    let _ = writeln!(d, "  ! tensor_converter ! tensor_trans mode=arith option=typecast:float32,mul:0.00390625");
    let _ = writeln!(d, "  ! tensor_aggregator in=1 out=8 flush=8 ! tensor_filter frame=toy m=\"{cnn}\"");
    let _ = writeln!(d, "  ! tensor_aggregator in=1 out=12 flush=3 ! tensor_filter frame=toy m=\"{lstm}\"");
    let _ = writeln!(d, "  ! mux.sink_0");
    let _ = writeln!(d, "tensor_merge name=merge sync-mode=slowest dimension=0");
    let _ = writeln!(d, "  ! tensor_filter framework=toy model=\"{uwb}\" ! mux.sink_1");
    for (i, pattern) in [uwb0, uwb1].iter().enumerate() {
        let _ = writeln!(d, "multifilesrc location=\"{pattern}\" rate=30 sync=false");
        let _ = writeln!(d, "  ! tensor_converter dim=1:1:{UWB_VALUES}:1 type=float32");
        let _ = writeln!(d, "  ! tensor_aggregator in=1 out=75 flush=25");
        let _ = writeln!(d, "  ! tensor_transform mode=stand ! merge.sink_{i}");
    }
    Ok(ArsFixture {
        dir: dir.to_path_buf(),
        frames,
        description: d,
    })
}

/// One image-pyramid layer: scale, convert, normalize to [-1, 1), swap
/// width and height, then a model and a post-processing model.
pub fn pnet_layer(width: u32, height: u32, model: &str, post: &str) -> String {
    format!(
        "queue leaky=downstream max-size-buffers=2 ! videoscale ! video/x-raw,width={width},height={height} \
         ! tensor_converter ! tensor_transform mode=arithmetic option=typecast:float32,add:-127.5,mul:0.0078125 \
         ! tensor_transform mode=transpose option=0:2:1:3 \
         ! tensor_filter framework=toy model=\"{model}\" ! tensor_filter framework=toy model=\"{post}\""
    )
}

/// A camera feeding `sizes.len()` pyramid layers through a tee into a mux.
/// The layer models come from `model(width, height)`; `post` is a toy model
/// applied after each of them.
pub fn pnet(
    sizes: &[(u32, u32)],
    source: &str,
    mut model: impl FnMut(u32, u32) -> String,
    post: &str,
) -> String {
    let mut d = format!("{source} ! tee name=t\ntensor_mux name=mux ! counting_sink name=out\n");
    for (i, &(w, h)) in sizes.iter().enumerate() {
        let _ = writeln!(d, "t. ! {} ! mux.sink_{i}", pnet_layer(w, h, &model(w, h), post));
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uwb_files_are_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_uwb_files(a.path(), "u", 3, 9).unwrap();
        write_uwb_files(b.path(), "u", 3, 9).unwrap();
        for i in 0..3 {
            let name = format!("u_{i:04}.dat");
            let x = std::fs::read(a.path().join(&name)).unwrap();
            assert_eq!(x.len(), 128);
            assert_eq!(x, std::fs::read(b.path().join(&name)).unwrap());
        }
    }

    #[test]
    fn seeded_dense_shape() {
        let m = seeded_dense(8, 3, 1).unwrap();
        assert_eq!(m.input_spec().dim.extents(), [1, 1, 8, 1]);
        assert_eq!(m.output_spec().dim.extents(), [1, 1, 3, 1]);
        assert_eq!(m, seeded_dense(8, 3, 1).unwrap());
    }
}
