use std::time::Duration;

use nnpipe::fixtures::{self, ARS_CHAIN_LINKS, ARS_ELEMENTS, ARS_PAD_LINKS};
use nnpipe::tensor::{ClockTime, Framerate};
use nnpipe::{CountingHandle, Pipeline};

const FRAMES: u64 = 1100;

fn source_stamp(i: u64) -> ClockTime {
    Framerate::fps(30).timestamp_of(i).unwrap()
}

/// Stamps leaving a sliding window of `out` frames advanced by `flush`.
fn windowed(stamps: &[ClockTime], out: usize, flush: usize) -> Vec<ClockTime> {
    (0..)
        .map(|k| k * flush)
        .take_while(|start| start + out <= stamps.len())
        .map(|start| stamps[start..start + out].iter().copied().max().unwrap())
        .collect()
}

fn nearest(candidates: &[ClockTime], target: ClockTime) -> usize {
    let mut best = 0;
    for (i, &c) in candidates.iter().enumerate() {
        if c.abs_diff(target) < candidates[best].abs_diff(target) {
            best = i;
        }
    }
    best
}

/// Output stamps of slowest-policy sync over fully known input streams.
fn slowest(streams: &[Vec<ClockTime>]) -> Vec<ClockTime> {
    let mut cursor = vec![0usize; streams.len()];
    let mut out = Vec::new();
    while streams.iter().zip(&cursor).all(|(s, &c)| c < s.len()) {
        let target = streams.iter().zip(&cursor).map(|(s, &c)| s[c]).max().unwrap();
        let mut newest = 0;
        for (s, c) in streams.iter().zip(cursor.iter_mut()) {
            let pick = *c + nearest(&s[*c..], target);
            newest = newest.max(s[pick]);
            *c = pick + 1;
        }
        out.push(newest);
    }
    out
}

fn expected_mux_stamps() -> Vec<ClockTime> {
    let src: Vec<ClockTime> = (0..FRAMES).map(source_stamp).collect();
    let dvs = windowed(&windowed(&src, 8, 8), 12, 3);
    let uwb = windowed(&src, 75, 25);
    let merged = slowest(&[uwb.clone(), uwb]);
    slowest(&[dvs, merged])
}

#[test]
fn oracle_counts() {
    let src: Vec<ClockTime> = (0..FRAMES).map(source_stamp).collect();
    assert_eq!(windowed(&src, 8, 8).len(), 137);
    assert_eq!(windowed(&windowed(&src, 8, 8), 12, 3).len(), 42);
    assert_eq!(windowed(&src, 75, 25).len(), 42);
}

#[test]
fn ars_runs_to_eos() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures::ars(dir.path(), FRAMES, 7).unwrap();
    let mut p = Pipeline::parse(&fx.description).unwrap();
    assert_eq!(p.graph().elements().count(), ARS_ELEMENTS);
    assert_eq!(p.graph().links().len(), ARS_CHAIN_LINKS + ARS_PAD_LINKS);
    p.run_until_eos(Some(Duration::from_secs(60))).unwrap();

    let stats = |name: &str| p.element_stats(name).unwrap();
    let aggregators: Vec<u64> = p
        .graph()
        .topological_order()
        .into_iter()
        .filter(|n| p.graph().element(n).unwrap().kind == "tensor_aggregator")
        .map(|n| stats(&n).frames_out)
        .collect();
    let mut sorted = aggregators.clone();
    sorted.sort();
    assert_eq!(sorted, vec![42, 42, 42, 137]);
    assert_eq!(stats("merge").frames_out, 42);

    let want = expected_mux_stamps();
    let out = p.handle::<CountingHandle>("out").unwrap();
    let got: Vec<ClockTime> = out.records().iter().map(|r| r.pts).collect();
    assert_eq!(got, want);
    assert_eq!(stats("mux").frames_out, want.len() as u64);
}
