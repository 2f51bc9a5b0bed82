//! Frame selection for multi-input elements.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::tensor::{Buffer, ClockTime};

use super::FlowError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SyncPolicy {
    /// Emit when every pad has a fresh frame.
    #[default]
    Slowest,
    /// Emit on each frame of the given pad.
    Base(usize),
    /// Emit on every arrival, reusing the latest frame of other pads.
    Fastest,
}

impl FromStr for SyncPolicy {
    type Err = String;

    /// `slowest`, `fastest`, or `base:<pad index>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slowest" => Ok(SyncPolicy::Slowest),
            "fastest" => Ok(SyncPolicy::Fastest),
            _ => match s.strip_prefix("base:") {
                Some(i) => i
                    .parse()
                    .map(SyncPolicy::Base)
                    .map_err(|_| format!("bad base pad index in '{s}'")),
                None => Err(format!("unknown sync mode '{s}'")),
            },
        }
    }
}

impl fmt::Display for SyncPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyncPolicy::Slowest => f.write_str("slowest"),
            SyncPolicy::Fastest => f.write_str("fastest"),
            SyncPolicy::Base(i) => write!(f, "base:{i}"),
        }
    }
}

/// Index of the candidate nearest to `target`; ties go to the earlier one.
///
/// `candidates` must be non-empty and sorted ascending.
pub fn mux_match(candidates: &[ClockTime], target: ClockTime) -> usize {
    assert!(!candidates.is_empty(), "mux_match needs at least one candidate");
    let first_at_or_after = candidates.partition_point(|&c| c < target);
    if first_at_or_after == 0 {
        return 0;
    }
    let below = first_at_or_after - 1;
    // Equal timestamps before the boundary: take the first of the run.
    let below = candidates[..=below].partition_point(|&c| c < candidates[below]);
    if first_at_or_after == candidates.len() {
        return below;
    }
    let (lo, hi) = (candidates[below], candidates[first_at_or_after]);
    if target - lo <= hi - target {
        below
    } else {
        first_at_or_after
    }
}

#[derive(Debug, Default)]
struct PadState {
    pending: VecDeque<Buffer>,
    /// Frame most recently used in an output.
    last: Option<Buffer>,
    eos: bool,
    last_arrival: Option<Instant>,
}

/// One combined output: a frame per pad, in pad order, and the output stamp.
#[derive(Debug, Clone)]
pub struct Combined {
    pub frames: Vec<Buffer>,
    pub pts: ClockTime,
}

/// Applies a [`SyncPolicy`] to frames arriving on several pads.
#[derive(Debug)]
pub struct SyncCollector {
    policy: SyncPolicy,
    pads: Vec<PadState>,
    last_out: Option<ClockTime>,
    finished: bool,
    starvation: Option<Duration>,
    started: Option<Instant>,
    /// Frames discarded without being used.
    pub skipped: u64,
}

impl SyncCollector {
    pub fn new(policy: SyncPolicy, pads: usize) -> Self {
        SyncCollector {
            policy,
            pads: (0..pads).map(|_| PadState::default()).collect(),
            last_out: None,
            finished: false,
            starvation: None,
            started: None,
            skipped: 0,
        }
    }

    /// Fail under `slowest` when a pad stays empty this long while others wait.
    pub fn with_starvation_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.starvation = timeout;
        self
    }

    pub fn policy(&self) -> SyncPolicy {
        self.policy
    }

    /// True once no further output can be produced.
    pub fn finished(&self) -> bool {
        self.finished
    }

    pub fn push(&mut self, pad: usize, buffer: Buffer) -> Result<Vec<Combined>, FlowError> {
        if self.finished {
            return Ok(Vec::new());
        }
        let now = Instant::now();
        self.started.get_or_insert(now);
        let ts = buffer.pts;
        self.pads[pad].last_arrival = Some(now);
        match self.policy {
            SyncPolicy::Fastest => {
                self.pads[pad].last = Some(buffer);
                if self.pads.iter().any(|p| p.last.is_none()) {
                    return Ok(Vec::new());
                }
                if self.last_out.is_some_and(|t| ts <= t) {
                    return Ok(Vec::new());
                }
                self.last_out = Some(ts);
                let frames = self.pads.iter().map(|p| p.last.clone().expect("checked")).collect();
                Ok(vec![Combined { frames, pts: ts }])
            }
            _ => {
                self.pads[pad].pending.push_back(buffer);
                self.check_starvation(now)?;
                Ok(self.drain())
            }
        }
    }

    pub fn eos(&mut self, pad: usize) -> Vec<Combined> {
        self.pads[pad].eos = true;
        if self.finished {
            return Vec::new();
        }
        match self.policy {
            SyncPolicy::Fastest => {
                if self.pads.iter().all(|p| p.eos) {
                    self.finished = true;
                }
                Vec::new()
            }
            _ => self.drain(),
        }
    }

    fn check_starvation(&self, now: Instant) -> Result<(), FlowError> {
        let (Some(limit), SyncPolicy::Slowest) = (self.starvation, self.policy) else {
            return Ok(());
        };
        let start = self.started.unwrap_or(now);
        for (i, p) in self.pads.iter().enumerate() {
            if p.eos || !p.pending.is_empty() {
                continue;
            }
            let since = p.last_arrival.unwrap_or(start);
            if now.duration_since(since) > limit {
                return Err(FlowError::StarvationTimeout {
                    pad: i,
                    waited_ms: now.duration_since(since).as_millis() as u64,
                });
            }
        }
        Ok(())
    }

    fn drain(&mut self) -> Vec<Combined> {
        let mut out = Vec::new();
        loop {
            let step = match self.policy {
                SyncPolicy::Slowest => self.step_slowest(),
                SyncPolicy::Base(i) => self.step_base(i),
                SyncPolicy::Fastest => None,
            };
            match step {
                Some(c) => out.push(c),
                None => break,
            }
        }
        out
    }

    /// Picks the nearest frame to `target` among `candidates` on pad `i`,
    /// provided the choice can no longer change. Returns its pending index.
    fn resolve(&self, i: usize, target: ClockTime, with_last: bool) -> Option<Resolved> {
        let p = &self.pads[i];
        let reach = p.pending.iter().position(|b| b.pts >= target);
        if reach.is_none() && !p.eos {
            return None;
        }
        let upto = reach.map_or(p.pending.len(), |r| r + 1);
        let mut stamps: Vec<ClockTime> = Vec::with_capacity(upto + 1);
        let offset = match (&p.last, with_last) {
            (Some(last), true) => {
                stamps.push(last.pts);
                1
            }
            _ => 0,
        };
        stamps.extend(p.pending.iter().take(upto).map(|b| b.pts));
        if stamps.is_empty() {
            return Some(Resolved::Nothing);
        }
        let k = mux_match(&stamps, target);
        if k < offset {
            Some(Resolved::Last)
        } else {
            Some(Resolved::Pending(k - offset))
        }
    }

    fn take(&mut self, i: usize, r: Resolved) -> Option<Buffer> {
        let p = &mut self.pads[i];
        match r {
            Resolved::Nothing => None,
            Resolved::Last => p.last.clone(),
            Resolved::Pending(k) => {
                for _ in 0..k {
                    p.pending.pop_front();
                    self.skipped += 1;
                }
                let b = p.pending.pop_front().expect("resolved index in range");
                p.last = Some(b.clone());
                Some(b)
            }
        }
    }

    fn step_slowest(&mut self) -> Option<Combined> {
        if self.pads.iter().any(|p| p.eos && p.pending.is_empty()) {
            self.finished = true;
            return None;
        }
        if self.pads.iter().any(|p| p.pending.is_empty()) {
            return None;
        }
        let target = self
            .pads
            .iter()
            .map(|p| p.pending.front().expect("non-empty").pts)
            .max()
            .expect("at least one pad");
        let mut picks = Vec::with_capacity(self.pads.len());
        for i in 0..self.pads.len() {
            picks.push(self.resolve(i, target, false)?);
        }
        let frames: Vec<Buffer> = picks
            .into_iter()
            .enumerate()
            .map(|(i, r)| self.take(i, r).expect("pending frames exist"))
            .collect();
        Some(self.emit(frames))
    }

    fn step_base(&mut self, base: usize) -> Option<Combined> {
        let Some(trigger) = self.pads[base].pending.front() else {
            if self.pads[base].eos {
                self.finished = true;
            }
            return None;
        };
        let target = trigger.pts;
        let mut picks = Vec::with_capacity(self.pads.len());
        for i in 0..self.pads.len() {
            if i == base {
                picks.push(Resolved::Pending(0));
            } else {
                picks.push(self.resolve(i, target, true)?);
            }
        }
        if picks.iter().any(|r| matches!(r, Resolved::Nothing)) {
            // A pad ended without ever producing; this trigger cannot be matched.
            self.pads[base].pending.pop_front();
            self.skipped += 1;
            return None;
        }
        let frames: Vec<Buffer> = picks
            .into_iter()
            .enumerate()
            .map(|(i, r)| self.take(i, r).expect("resolved"))
            .collect();
        Some(self.emit(frames))
    }

    fn emit(&mut self, frames: Vec<Buffer>) -> Combined {
        let newest = frames.iter().map(|b| b.pts).max().unwrap_or(0);
        let pts = self.last_out.map_or(newest, |t| t.max(newest));
        self.last_out = Some(pts);
        Combined { frames, pts }
    }
}

#[derive(Debug, Clone, Copy)]
enum Resolved {
    Nothing,
    Last,
    Pending(usize),
}
