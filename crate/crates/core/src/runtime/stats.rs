use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

/// Live per-element counters.
#[derive(Debug, Default)]
pub struct ElementStats {
    frames_in: AtomicU64,
    frames_out: AtomicU64,
    dropped: AtomicU64,
    busy_ns: AtomicU64,
    last_latency_ns: AtomicU64,
}

impl ElementStats {
    pub fn add_in(&self) {
        self.frames_in.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add_out(&self) {
        self.frames_out.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add_drop(&self) {
        self.dropped.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add_drops(&self, n: u64) {
        self.dropped.fetch_add(n, Ordering::Relaxed);
    }

    /// Records one unit of work.
    pub fn add_busy(&self, ns: u64) {
        self.busy_ns.fetch_add(ns, Ordering::Relaxed);
        self.last_latency_ns.store(ns, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            frames_in: self.frames_in.load(Ordering::Relaxed),
            frames_out: self.frames_out.load(Ordering::Relaxed),
            frames_dropped: self.dropped.load(Ordering::Relaxed),
            busy_ns: self.busy_ns.load(Ordering::Relaxed),
            last_latency_ns: self.last_latency_ns.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub frames_in: u64,
    pub frames_out: u64,
    pub frames_dropped: u64,
    pub busy_ns: u64,
    pub last_latency_ns: u64,
}

impl StatsSnapshot {
    pub fn busy_ms(&self) -> f64 {
        self.busy_ns as f64 / 1e6
    }
}

/// One stats line: `name frames_in frames_out drops busy_ms`.
pub struct StatsLine<'a>(pub &'a str, pub &'a StatsSnapshot);

impl fmt::Display for StatsLine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.1;
        write!(
            f,
            "{} {} {} {} {:.3}",
            self.0,
            s.frames_in,
            s.frames_out,
            s.frames_dropped,
            s.busy_ms()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let s = ElementStats::default();
        s.add_in();
        s.add_in();
        s.add_out();
        s.add_drop();
        s.add_busy(1_500_000);
        let snap = s.snapshot();
        assert_eq!(StatsLine("q", &snap).to_string(), "q 2 1 1 1.500");
        assert_eq!(snap.last_latency_ns, 1_500_000);
    }
}
