use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use nnpipe::fixtures;
use nnpipe::Pipeline;

const TIMEOUT: Option<Duration> = Some(Duration::from_secs(120));

fn run(description: &str) {
    let mut p = Pipeline::parse(description).unwrap();
    p.run_until_eos(TIMEOUT).unwrap();
}

fn bench_chain(c: &mut Criterion) {
    let mut group = c.benchmark_group("chain");
    for frames in [100u64, 1000] {
        group.throughput(Throughput::Elements(frames));
        let d = format!(
            "synthetic_src caps=other/tensor,dimension=3:64:48:1,type=uint8,framerate=30/1 pattern=random:1 \
             frames={frames} sync=false ! tensor_transform mode=arithmetic option=typecast:float32,mul:0.00390625 \
             ! queue ! counting_sink"
        );
        group.bench_with_input(BenchmarkId::from_parameter(frames), &d, |b, d| b.iter(|| run(d)));
    }
    group.finish();
}

fn bench_tee(c: &mut Criterion) {
    let mut group = c.benchmark_group("tee_fan_out");
    for branches in [1usize, 4] {
        let mut d = String::from(
            "synthetic_src caps=other/tensor,dimension=1024:256:1:1,type=uint8,framerate=30/1 frames=200 sync=false \
             ! tee name=t\n",
        );
        for _ in 0..branches {
            d.push_str("t. ! queue ! counting_sink\n");
        }
        group.bench_with_input(BenchmarkId::from_parameter(branches), &d, |b, d| b.iter(|| run(d)));
    }
    group.finish();
}

fn bench_ars(c: &mut Criterion) {
    let dir = tempfile_dir();
    let fx = fixtures::ars(&dir, 1100, 7).unwrap();
    let mut group = c.benchmark_group("ars");
    group.sample_size(10);
    group.throughput(Throughput::Elements(fx.frames));
    group.bench_function("1100_frames", |b| b.iter(|| run(&fx.description)));
    group.finish();
    let _ = std::fs::remove_dir_all(&dir);
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("nnpipe-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

criterion_group!(benches, bench_chain, bench_tee, bench_ars);
criterion_main!(benches);
