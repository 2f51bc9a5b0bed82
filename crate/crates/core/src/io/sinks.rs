use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::element::props::LEAK_VALUES;
use crate::element::{
    ConfigError, Element, ElementConfig, ElementError, Flow, Instance, InstanceContext, Negotiation,
    NegotiationError, PadDirection, PadTemplate, PropKind, PropSpec, StaticFactory,
};
use crate::runtime::{BoundedQueue, Leak, Outputs, QueuePolicy};
use crate::tensor::{Buffer, ClockTime};

use super::{framed_record, IoError};

fn no_outputs(_: &Negotiation<'_>) -> Result<Vec<crate::tensor::Caps>, NegotiationError> {
    Ok(Vec::new())
}

/// Sha-256 over a buffer's type and bytes.
pub fn buffer_digest(buffer: &Buffer) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(buffer.caps().to_string().as_bytes());
    for m in buffer.memories() {
        h.update(m.as_slice());
    }
    h.finalize().into()
}

// counting_sink

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRecord {
    pub seq: u64,
    pub pts: ClockTime,
    pub digest: [u8; 32],
}

/// Counters of a `counting_sink`, readable while the pipeline runs.
#[derive(Debug, Default)]
pub struct CountingHandle {
    frames: AtomicU64,
    last_pts: AtomicU64,
    log: Option<Mutex<Vec<FrameRecord>>>,
}

impl CountingHandle {
    pub fn frames(&self) -> u64 {
        self.frames.load(Ordering::SeqCst)
    }

    pub fn last_pts(&self) -> ClockTime {
        self.last_pts.load(Ordering::SeqCst)
    }

    /// Per-frame records; empty unless `log=true`.
    pub fn records(&self) -> Vec<FrameRecord> {
        self.log
            .as_ref()
            .map(|l| l.lock().expect("log lock").clone())
            .unwrap_or_default()
    }

    /// Digest of the whole stream: sha-256 over the per-frame digests.
    pub fn stream_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for r in self.records() {
            h.update(r.digest);
        }
        h.finalize().into()
    }
}

#[derive(Debug)]
struct CountingConfig {
    log: bool,
}

struct Counting {
    handle: Arc<CountingHandle>,
}

impl Element for Counting {
    fn chain(&mut self, _: usize, buffer: Buffer, _: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        if let Some(log) = &self.handle.log {
            log.lock().expect("log lock").push(FrameRecord {
                seq: buffer.seq,
                pts: buffer.pts,
                digest: buffer_digest(&buffer),
            });
        }
        self.handle.last_pts.store(buffer.pts, Ordering::SeqCst);
        self.handle.frames.fetch_add(1, Ordering::SeqCst);
        Ok(Flow::Ok)
    }
}

impl ElementConfig for CountingConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<crate::tensor::Caps>, NegotiationError> {
        no_outputs(n)
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let handle = Arc::new(CountingHandle {
            log: self.log.then(|| Mutex::new(Vec::new())),
            ..CountingHandle::default()
        });
        Ok(Instance::chain(Counting { handle: handle.clone() }).with_handle(handle))
    }
}

pub(crate) const COUNTING_SINK: StaticFactory = StaticFactory {
    kind: "counting_sink",
    aliases: &["fakesink"],
    description: "Counts frames and optionally logs a digest of each",
    properties: &[PropSpec::new("log", PropKind::Bool, "keep sequence number, stamp and digest of every frame")
        .aliases(&["digests"])
        .default("false")],
    pads: &[PadTemplate::always("sink", PadDirection::Sink, "ANY")],
    configure: |props, _| {
        Ok(Arc::new(CountingConfig {
            log: props.bool("log").unwrap_or(false),
        }))
    },
};

// appsink

/// Application side of an `appsink`.
#[derive(Debug)]
pub struct AppSinkHandle {
    queue: BoundedQueue<Buffer>,
    dropped: AtomicU64,
}

impl AppSinkHandle {
    /// Waits for the next buffer; `None` once the stream ended and the queue is empty.
    pub fn pull(&self) -> Option<Buffer> {
        self.queue.pop()
    }

    /// Like [`pull`](Self::pull) with a deadline. The outer `None` means the stream ended.
    pub fn pull_timeout(&self, timeout: Duration) -> Option<Option<Buffer>> {
        self.queue.pop_timeout(timeout)
    }

    pub fn try_pull(&self) -> Option<Buffer> {
        self.queue.try_pop()
    }

    /// Buffers in arrival order until the stream ends.
    pub fn drain(&self) -> impl Iterator<Item = Buffer> + '_ {
        std::iter::from_fn(move || self.pull())
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::SeqCst)
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }
}

#[derive(Debug)]
struct AppSinkConfig {
    policy: QueuePolicy,
}

struct AppSink {
    handle: Arc<AppSinkHandle>,
}

impl Element for AppSink {
    fn chain(&mut self, _: usize, buffer: Buffer, out: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        let outcome = self.handle.queue.push(buffer);
        if outcome.dropped() {
            self.handle.dropped.fetch_add(1, Ordering::SeqCst);
            out.record_drop();
        }
        if outcome == crate::runtime::PushOutcome::Closed {
            return Ok(Flow::Eos);
        }
        Ok(Flow::Ok)
    }

    fn eos(&mut self, _: usize, _: &mut Outputs<'_>) -> Result<(), ElementError> {
        self.handle.queue.close();
        Ok(())
    }
}

impl ElementConfig for AppSinkConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<crate::tensor::Caps>, NegotiationError> {
        no_outputs(n)
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let handle = Arc::new(AppSinkHandle {
            queue: BoundedQueue::new(self.policy),
            dropped: AtomicU64::new(0),
        });
        let closer = handle.clone();
        Ok(Instance::chain(AppSink { handle: handle.clone() })
            .with_handle(handle)
            .with_stop_hook(Arc::new(move || closer.queue.close())))
    }
}

pub(crate) const APPSINK: StaticFactory = StaticFactory {
    kind: "appsink",
    aliases: &[],
    description: "Hands frames to the application through a bounded queue",
    properties: &[
        PropSpec::new("max-buffers", PropKind::Int { min: 1, max: 1 << 20 }, "frames queued before the leak policy applies")
            .default("16"),
        PropSpec::new("leaky", PropKind::Enum(LEAK_VALUES), "what to do when full")
            .aliases(&["leak"])
            .default("none"),
    ],
    pads: &[PadTemplate::always("sink", PadDirection::Sink, "ANY")],
    configure: |props, _| {
        let leak: Leak = props
            .str("leaky")
            .unwrap_or("none")
            .parse()
            .map_err(ConfigError::BadProperty)?;
        Ok(Arc::new(AppSinkConfig {
            policy: QueuePolicy::new(props.int("max-buffers").unwrap_or(16) as usize, leak),
        }))
    },
};

// filesink

#[derive(Debug)]
struct FileSinkConfig {
    path: PathBuf,
    framed: bool,
}

struct FileSink {
    path: PathBuf,
    framed: bool,
    out: BufWriter<File>,
}

impl FileSink {
    fn write(&mut self, bytes: &[u8]) -> Result<(), IoError> {
        self.out.write_all(bytes).map_err(|e| IoError::io(&self.path, e))
    }
}

impl Element for FileSink {
    fn chain(&mut self, _: usize, buffer: Buffer, _: &mut Outputs<'_>) -> Result<Flow, ElementError> {
        if self.framed {
            let bytes: Vec<u8> = buffer.memories().iter().flat_map(|m| m.iter().copied()).collect();
            self.write(&framed_record(buffer.pts, &bytes))?;
        } else {
            for m in buffer.memories() {
                self.write(m)?;
            }
        }
        Ok(Flow::Ok)
    }

    fn eos(&mut self, _: usize, _: &mut Outputs<'_>) -> Result<(), ElementError> {
        self.out.flush().map_err(|e| IoError::io(&self.path, e))?;
        Ok(())
    }
}

impl ElementConfig for FileSinkConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<crate::tensor::Caps>, NegotiationError> {
        no_outputs(n)
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        let file = File::create(&self.path).map_err(|e| IoError::io(&self.path, e))?;
        Ok(Instance::chain(FileSink {
            path: self.path.clone(),
            framed: self.framed,
            out: BufWriter::new(file),
        }))
    }
}

pub(crate) const FILESINK: StaticFactory = StaticFactory {
    kind: "filesink",
    aliases: &[],
    description: "Writes raw frame bytes, or length+timestamp framed records, to a file",
    properties: &[
        PropSpec::new("location", PropKind::Str, "output path").required(),
        PropSpec::new("framed", PropKind::Bool, "prefix each frame with u64 length and u64 timestamp")
            .default("false"),
    ],
    pads: &[PadTemplate::always("sink", PadDirection::Sink, "ANY")],
    configure: |props, _| {
        Ok(Arc::new(FileSinkConfig {
            path: PathBuf::from(props.str("location").unwrap_or_default()),
            framed: props.bool("framed").unwrap_or(false),
        }))
    },
};
