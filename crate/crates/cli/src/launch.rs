use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nnpipe::runtime::{StatsSnapshot, StatsSource};
use nnpipe::{ParseError, Pipeline, PipelineState, RuntimeError};

use crate::LaunchOptions;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

const POLL: Duration = Duration::from_millis(50);

/// Prints a parse error with the offending line and a caret under the span.
pub fn report_parse_error(description: &str, e: &ParseError) {
    eprintln!("error: {e}");
    if let Some(line) = description.lines().nth(e.line.saturating_sub(1)) {
        let width = description[e.span.clone()]
            .lines()
            .next()
            .map_or(1, |s| s.chars().count().max(1));
        eprintln!("  {line}");
        eprintln!("  {}{}", " ".repeat(e.col.saturating_sub(1)), "^".repeat(width));
    }
}

/// Parses and validates, reporting problems on stderr.
pub fn load(description: &str) -> Option<Pipeline> {
    let pipeline = match Pipeline::parse(description) {
        Ok(p) => p,
        Err(e) => {
            report_parse_error(description, &e);
            return None;
        }
    };
    if let Err(diags) = pipeline.graph().validate() {
        for d in diags {
            eprintln!("error: {d}");
        }
        return None;
    }
    Some(pipeline)
}

fn print_stats(source: &StatsSource, elapsed: Duration, header: &str) {
    let secs = elapsed.as_secs_f64().max(1e-9);
    println!("{header} t={secs:.2}s");
    println!("  {:<24} {:>9} {:>9} {:>7} {:>10} {:>9}", "element", "in", "out", "drops", "busy_ms", "fps");
    for (name, s) in source.snapshot() {
        println!(
            "  {:<24} {:>9} {:>9} {:>7} {:>10.1} {:>9.1}",
            name,
            s.frames_in,
            s.frames_out,
            s.frames_dropped,
            s.busy_ms(),
            throughput(&s) as f64 / secs
        );
    }
}

/// Frames an element handled: what it emitted, or what it consumed if it is a sink.
fn throughput(s: &StatsSnapshot) -> u64 {
    if s.frames_out > 0 {
        s.frames_out
    } else {
        s.frames_in
    }
}

fn exit_for(e: &RuntimeError) -> u8 {
    match e {
        RuntimeError::InvalidGraph(_) => EXIT_INVALID,
        _ => EXIT_RUNTIME,
    }
}

pub fn run(options: &LaunchOptions) -> u8 {
    let description = options.description.join(" ");
    let Some(mut pipeline) = load(&description) else {
        return EXIT_INVALID;
    };
    if let Some(path) = &options.dump_graph {
        if let Err(e) = crate::dot::write(pipeline.graph(), Some(path)) {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    }
    pipeline.set_frame_limit(options.frames);

    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let flag = interrupted.clone();
        if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
            log::warn!("cannot install interrupt handler: {e}");
        }
    }

    let start = Instant::now();
    if let Err(e) = pipeline.set_state(PipelineState::Running) {
        eprintln!("error: {e}");
        return exit_for(&e);
    }
    log::info!("running {} elements", pipeline.graph().element_count());
    let source = pipeline.stats_source();
    let interval = options.stats.map(Duration::from_secs_f64);
    let mut next_report = interval.map(|i| start + i);

    let outcome = loop {
        match pipeline.wait(Some(POLL)) {
            Ok(true) => break Ok(()),
            Ok(false) => {}
            Err(e) => break Err(e),
        }
        if interrupted.load(Ordering::SeqCst) {
            log::info!("interrupted; stopping");
            break Ok(());
        }
        if let (Some(at), Some(every)) = (next_report, interval) {
            if Instant::now() >= at {
                print_stats(&source, start.elapsed(), "stats");
                next_report = Some(at + every);
            }
        }
    };
    let elapsed = start.elapsed();
    let stopped = pipeline.set_state(PipelineState::Stopped);
    if options.stats.is_some() || options.verbose {
        print_stats(&source, elapsed, "summary");
    }
    match outcome.and(stopped.map(|_| ())) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
