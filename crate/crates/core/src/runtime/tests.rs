use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;

use super::*;
use crate::filter::{CustomFramework, FnModel};
use crate::io::{AppSinkHandle, AppSrcHandle, CountingHandle};
use crate::tensor::{Buffer, Caps, Payload};

const U8_4: &str = "other/tensor,dimension=1:1:4:1,type=uint8,framerate=30/1";
const SECS: Option<Duration> = Some(Duration::from_secs(20));

fn wait_for(what: &str, mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while !cond() {
        assert!(Instant::now() < deadline, "timed out waiting for {what}");
        std::thread::sleep(Duration::from_millis(2));
    }
}

fn registry_with(models: Vec<(&str, FnModel)>) -> Arc<Registry> {
    let custom = CustomFramework::new("custom");
    for (key, m) in models {
        custom.add(key, m).unwrap();
    }
    let r = Registry::with_builtins();
    r.register_plugin(Arc::new(custom)).unwrap();
    Arc::new(r)
}

fn u8_buffer(caps: &Arc<Caps>, tag: u8, pts: u64) -> Buffer {
    Buffer::new(caps.clone(), Payload::from_vec(vec![tag; 4]), pts).unwrap()
}

#[test]
fn source_to_sink_runs_to_eos() {
    let mut p = Pipeline::parse(&format!("synthetic_src caps={U8_4} frames=20 sync=false ! counting_sink name=out")).unwrap();
    assert_eq!(p.state(), PipelineState::Stopped);
    assert_eq!(p.set_state(PipelineState::Running).unwrap(), PipelineState::Running);
    assert!(p.wait(SECS).unwrap());
    assert_eq!(p.handle::<CountingHandle>("out").unwrap().frames(), 20);
    p.set_state(PipelineState::Stopped).unwrap();
    // Counters survive the stop.
    assert_eq!(p.element_stats("out").unwrap().frames_in, 20);
}

#[test]
fn pause_stops_new_frames() {
    let mut p = Pipeline::parse(&format!(
        "synthetic_src caps={} ! queue ! counting_sink name=out",
        U8_4.replace("30/1", "500/1")
    ))
    .unwrap();
    p.set_state(PipelineState::Running).unwrap();
    let out = p.handle::<CountingHandle>("out").unwrap();
    wait_for("frames", || out.frames() >= 5);
    p.set_state(PipelineState::Paused).unwrap();
    std::thread::sleep(Duration::from_millis(50));
    let quiet = out.frames();
    std::thread::sleep(Duration::from_millis(100));
    assert_eq!(out.frames(), quiet);
    p.set_state(PipelineState::Running).unwrap();
    wait_for("more frames", || out.frames() > quiet);
    p.set_state(PipelineState::Stopped).unwrap();
    assert_eq!(p.state(), PipelineState::Stopped);
}

#[test]
fn edits_only_while_not_running() {
    let mut p = Pipeline::parse(&format!("synthetic_src caps={U8_4} ! valve name=v ! counting_sink")).unwrap();
    p.set_state(PipelineState::Running).unwrap();
    assert!(matches!(p.edit(|_| ()), Err(RuntimeError::IllegalState(_))));
    p.set_state(PipelineState::Paused).unwrap();
    p.edit(|g| {
        g.unlink(&crate::graph::PadRef::new("v", "src")).unwrap();
        g.add("queue name=q").unwrap();
        g.link("v", None, "q", None).unwrap();
        g.link("q", None, "counting_sink0", None).unwrap();
    })
    .unwrap();
    assert_eq!(p.state(), PipelineState::Paused);
    assert!(p.graph().element("q").is_some());
    p.set_state(PipelineState::Stopped).unwrap();
}

#[test]
fn invalid_graph_does_not_start() {
    let mut g = crate::graph::PipelineGraph::default();
    g.add("queue").unwrap();
    let mut p = Pipeline::new(g);
    assert!(p.set_state(PipelineState::Running).is_err());
    assert_eq!(p.state(), PipelineState::Stopped);
}

#[test]
fn tee_shares_payloads() {
    let mut p = Pipeline::parse(&format!(
        "synthetic_src caps={U8_4} pattern=random:3 frames=50 sync=false ! tee name=t \
         t. ! queue ! appsink name=a max-buffers=64 \
         t. ! queue ! appsink name=b max-buffers=64"
    ))
    .unwrap();
    p.run_until_eos(SECS).unwrap();
    assert_eq!(p.copy_count(), 0);
    let a: Vec<Buffer> = p.handle::<AppSinkHandle>("a").unwrap().drain().collect();
    let b: Vec<Buffer> = p.handle::<AppSinkHandle>("b").unwrap().drain().collect();
    assert_eq!(a.len(), 50);
    assert_eq!(b.len(), 50);
    for (x, y) in a.iter().zip(&b) {
        assert!(x.payload().ptr_eq(y.payload()));
        assert_eq!(x.payload().id(), y.payload().id());
    }
}

#[test]
fn single_branch_tee_is_a_pass_through() {
    let mut p = Pipeline::parse(&format!(
        "synthetic_src caps={U8_4} frames=5 sync=false ! tee ! appsink name=a"
    ))
    .unwrap();
    p.run_until_eos(SECS).unwrap();
    let seqs: Vec<u64> = p.handle::<AppSinkHandle>("a").unwrap().drain().map(|b| b.seq).collect();
    assert_eq!(seqs, [0, 1, 2, 3, 4]);
}

#[test]
fn writing_branch_gets_a_private_copy() {
    let registry = registry_with(vec![(
        "inc",
        FnModel::in_place(|bytes| bytes.iter_mut().for_each(|b| *b = b.wrapping_add(1))),
    )]);
    let mut p = Pipeline::parse_with(
        &format!(
            "synthetic_src caps={U8_4} pattern=ramp frames=30 sync=false ! tee name=t \
             t. ! queue ! appsink name=plain max-buffers=64 \
             t. ! queue ! tensor_filter framework=custom model=inc ! appsink name=inc max-buffers=64"
        ),
        registry,
    )
    .unwrap();
    p.run_until_eos(SECS).unwrap();
    assert_eq!(p.copy_count(), 30);
    let plain: Vec<Buffer> = p.handle::<AppSinkHandle>("plain").unwrap().drain().collect();
    let inc: Vec<Buffer> = p.handle::<AppSinkHandle>("inc").unwrap().drain().collect();
    assert_eq!(plain.len(), 30);
    for (x, y) in plain.iter().zip(&inc) {
        assert_ne!(x.payload().id(), y.payload().id());
        let want: Vec<u8> = x.bytes().iter().map(|b| b.wrapping_add(1)).collect();
        assert_eq!(y.bytes(), &want[..]);
    }
    let expected = crate::io::generate(plain[3].caps(), crate::io::Generator::Ramp, 3);
    assert_eq!(plain[3].bytes(), &expected[0][..]);
}

fn app_pipeline(description: &str) -> (Pipeline, Arc<AppSrcHandle>, Arc<Caps>) {
    let mut p = Pipeline::parse(description).unwrap();
    p.set_state(PipelineState::Running).unwrap();
    let src = p.handle::<AppSrcHandle>("src").unwrap();
    let caps = Arc::new(src.caps().clone());
    (p, src, caps)
}

#[test]
fn valve_toggle_mid_stream() {
    let (mut p, src, caps) = app_pipeline(&format!("appsrc name=src caps={U8_4} ! valve name=v drop=true ! counting_sink name=out"));
    for i in 0..5 {
        src.push(u8_buffer(&caps, i, u64::from(i))).unwrap();
    }
    wait_for("valve input", || p.element_stats("v").unwrap().frames_in == 5);
    p.set_property("v", "drop", "false").unwrap();
    assert_eq!(p.get_property("v", "drop").unwrap().as_deref(), Some("false"));
    for i in 5..10 {
        src.push(u8_buffer(&caps, i, u64::from(i))).unwrap();
    }
    src.end_of_stream();
    assert!(p.wait(SECS).unwrap());
    p.set_state(PipelineState::Stopped).unwrap();
    assert_eq!(p.handle::<CountingHandle>("out").unwrap().frames(), 5);
    assert_eq!(p.element_stats("v").unwrap().frames_dropped, 5);
}

#[test]
fn closed_valve_drops_everything() {
    let mut p = Pipeline::parse(&format!(
        "synthetic_src caps={U8_4} frames=10 sync=false ! valve name=v drop=true ! counting_sink name=out"
    ))
    .unwrap();
    p.run_until_eos(SECS).unwrap();
    assert_eq!(p.handle::<CountingHandle>("out").unwrap().frames(), 0);
    assert_eq!(p.element_stats("v").unwrap().frames_dropped, 10);
}

#[test]
fn selector_switches_at_buffer_granularity() {
    let mut p = Pipeline::parse(&format!(
        "appsrc name=a caps={U8_4} ! s.sink_0 appsrc name=b caps={U8_4} ! s.sink_1 \
         input_selector name=s ! appsink name=out max-buffers=64"
    ))
    .unwrap();
    p.set_state(PipelineState::Running).unwrap();
    let a = p.handle::<AppSrcHandle>("a").unwrap();
    let b = p.handle::<AppSrcHandle>("b").unwrap();
    let caps = Arc::new(a.caps().clone());
    for i in 1..=3 {
        a.push(u8_buffer(&caps, 10 + i, u64::from(i))).unwrap();
    }
    wait_for("selector", || p.element_stats("s").unwrap().frames_out == 3);
    p.set_property("s", "active-pad", "sink_1").unwrap();
    a.push(u8_buffer(&caps, 14, 4)).unwrap();
    wait_for("drop", || p.element_stats("s").unwrap().frames_dropped == 1);
    for i in 1..=3 {
        b.push(u8_buffer(&caps, 20 + i, u64::from(i))).unwrap();
    }
    b.end_of_stream();
    a.end_of_stream();
    assert!(p.wait(SECS).unwrap());
    let err = p.set_property("s", "active-pad", "sink_5").unwrap_err();
    assert!(err.to_string().contains("UnknownPad"), "{err}");
    p.set_state(PipelineState::Stopped).unwrap();
    let tags: Vec<u8> = p.handle::<AppSinkHandle>("out").unwrap().drain().map(|b| b.bytes()[0]).collect();
    assert_eq!(tags, [11, 12, 13, 21, 22, 23]);
}

#[test]
fn single_input_selector_is_identity() {
    let mut p = Pipeline::parse(&format!(
        "synthetic_src caps={U8_4} pattern=ramp frames=7 sync=false ! input_selector ! counting_sink name=out"
    ))
    .unwrap();
    p.run_until_eos(SECS).unwrap();
    assert_eq!(p.handle::<CountingHandle>("out").unwrap().frames(), 7);
}

#[test]
fn stats_count_frames_and_busy_time() {
    let registry = registry_with(vec![("busy", FnModel::busy(Duration::from_millis(5)))]);
    let mut p = Pipeline::parse_with(
        &format!("synthetic_src caps={U8_4} frames=100 sync=false ! tensor_filter name=f framework=custom model=busy ! counting_sink name=out"),
        registry,
    )
    .unwrap();
    p.run_until_eos(SECS).unwrap();
    let f = p.element_stats("f").unwrap();
    assert_eq!((f.frames_in, f.frames_out), (100, 100));
    assert_eq!(p.element_stats("out").unwrap().frames_in, 100);
    let ms = f.busy_ms();
    assert!((400.0..=600.0).contains(&ms), "busy {ms} ms");
    let report = p.stats_report();
    assert!(report.lines().any(|l| l.starts_with("f 100 100 0 ")), "{report}");
}

#[test]
fn leaky_queue_drops_are_counted() {
    let registry = registry_with(vec![("slow", FnModel::slow(Duration::from_millis(10)))]);
    let mut p = Pipeline::parse_with(
        &format!(
            "synthetic_src caps={U8_4} frames=60 sync=false ! queue name=q max-size-buffers=2 leaky=downstream \
             ! tensor_filter framework=custom model=slow ! counting_sink name=out"
        ),
        registry,
    )
    .unwrap();
    p.run_until_eos(SECS).unwrap();
    let q = p.element_stats("q").unwrap();
    let delivered = p.handle::<CountingHandle>("out").unwrap().frames();
    assert!(q.frames_dropped > 0);
    assert_eq!(delivered + q.frames_dropped, 60);
    assert_eq!(q.frames_out, delivered);
}

#[test]
fn blocking_queue_bounds_the_producer_lead() {
    let registry = registry_with(vec![("slow", FnModel::slow(Duration::from_millis(5)))]);
    let mut p = Pipeline::parse_with(
        &format!(
            "synthetic_src name=src caps={U8_4} frames=60 sync=false ! queue max-size-buffers=4 \
             ! tensor_filter framework=custom model=slow ! counting_sink name=out"
        ),
        registry,
    )
    .unwrap();
    p.set_state(PipelineState::Running).unwrap();
    let out = p.handle::<CountingHandle>("out").unwrap();
    let mut worst = 0;
    while out.frames() < 60 {
        let produced = p.element_stats("src").unwrap().frames_out;
        let consumed = out.frames();
        worst = worst.max(produced.saturating_sub(consumed));
        std::thread::sleep(Duration::from_millis(1));
    }
    p.set_state(PipelineState::Stopped).unwrap();
    // queue capacity + one frame held by the queue thread + one in the source's hands
    assert!(worst <= 4 + 2, "lead {worst}");
}

#[test]
fn stats_are_monotone() {
    let mut p = Pipeline::parse(&format!(
        "synthetic_src caps={} frames=200 ! queue ! counting_sink name=out",
        U8_4.replace("30/1", "1000/1")
    ))
    .unwrap();
    p.set_state(PipelineState::Running).unwrap();
    let source = p.stats_source();
    let mut last: Vec<(String, crate::runtime::StatsSnapshot)> = source.snapshot();
    while !p.wait(Some(Duration::from_millis(5))).unwrap() {
        let now = source.snapshot();
        for ((n, a), (_, b)) in last.iter().zip(&now) {
            assert!(b.frames_in >= a.frames_in && b.frames_out >= a.frames_out, "{n}");
        }
        last = now;
    }
    p.set_state(PipelineState::Stopped).unwrap();
}

/// Random acyclic graph: sources through blocking queues, tees and muxes.
fn random_topology() -> impl Strategy<Value = String> {
    let branch = (0usize..3, 1u32..4, any::<bool>());
    (prop::collection::vec(branch, 1..5), 1u64..40).prop_map(|(branches, frames)| {
        let mut d = String::new();
        let mut mux_pads = 0;
        for (i, (fan, cap, to_mux)) in branches.into_iter().enumerate() {
            d.push_str(&format!("synthetic_src caps={U8_4} frames={frames} sync=false ! tee name=t{i}\n"));
            for k in 0..=fan {
                let end = if to_mux && k == 0 {
                    mux_pads += 1;
                    format!("m.sink_{}", mux_pads - 1)
                } else {
                    "counting_sink".to_string()
                };
                d.push_str(&format!("t{i}. ! queue max-size-buffers={cap} ! {end}\n"));
            }
        }
        if mux_pads > 0 {
            d.push_str("tensor_mux name=m sync-mode=slowest ! queue max-size-buffers=1 ! counting_sink name=out\n");
        }
        d
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn acyclic_graphs_never_deadlock(d in random_topology()) {
        let mut p = Pipeline::parse(&d).map_err(|e| TestCaseError::fail(format!("{e}\n{d}")))?;
        let r = p.run_until_eos(Some(Duration::from_secs(30)));
        prop_assert!(r.is_ok(), "{:?}\n{}", r, d);
    }
}

#[test]
fn frame_limit_ends_an_endless_source() {
    let mut p = Pipeline::parse(&format!("synthetic_src caps={U8_4} sync=false ! counting_sink name=out")).unwrap();
    p.set_frame_limit(Some(25));
    p.run_until_eos(SECS).unwrap();
    assert!(p.handle::<CountingHandle>("out").unwrap().frames() >= 25);
}
