//! The execution plan built from a validated graph, and the threads that run it.
//!
//! Every source and every queue owns a thread. A buffer pushed on a source
//! pad is handed to the downstream element on the pushing thread; chain
//! elements sit behind a mutex, which serializes arrivals from different
//! threads (the mailbox of multi-input elements).

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::element::{
    Control, ElementError, Flow, InstanceContext, PadDirection, PadLayout, Produced, Runner, Source,
    SourceClock,
};
use crate::flow::RepoRegistry;
use crate::graph::PipelineGraph;
use crate::tensor::{Buffer, ClockTime, CopyScope};

use super::outputs::{OutputSink, Outputs};
use super::queue::BoundedQueue;
use super::stats::ElementStats;
use super::RuntimeError;

#[derive(Debug, Default)]
struct ClockState {
    base: Option<Instant>,
    paused_at: Option<Instant>,
    paused_total: Duration,
}

/// Running time: wall time since the first start, minus time spent paused.
#[derive(Debug, Default)]
pub(crate) struct PipelineClock {
    state: Mutex<ClockState>,
}

impl PipelineClock {
    fn start(&self) {
        let mut s = self.state.lock().expect("clock lock");
        let now = Instant::now();
        match (s.base, s.paused_at.take()) {
            (None, _) => s.base = Some(now),
            (Some(_), Some(p)) => s.paused_total += now - p,
            _ => {}
        }
    }

    fn pause(&self) {
        let mut s = self.state.lock().expect("clock lock");
        if s.base.is_some() && s.paused_at.is_none() {
            s.paused_at = Some(Instant::now());
        }
    }

    pub(crate) fn now(&self) -> ClockTime {
        let s = self.state.lock().expect("clock lock");
        match s.base {
            None => 0,
            Some(base) => {
                let end = s.paused_at.unwrap_or_else(Instant::now);
                end.saturating_duration_since(base)
                    .saturating_sub(s.paused_total)
                    .as_nanos() as ClockTime
            }
        }
    }
}

impl SourceClock for PipelineClock {
    fn running_time(&self) -> ClockTime {
        self.now()
    }
}

#[derive(Debug, Default)]
struct GateState {
    running: bool,
    stopping: bool,
}

/// Run/pause/stop signal shared by every pipeline thread.
#[derive(Debug, Default)]
pub(crate) struct Gate {
    state: Mutex<GateState>,
    cv: Condvar,
}

impl Gate {
    fn set_running(&self, running: bool) {
        self.state.lock().expect("gate lock").running = running;
        self.cv.notify_all();
    }

    fn stop(&self) {
        self.state.lock().expect("gate lock").stopping = true;
        self.cv.notify_all();
    }

    /// Blocks while paused. False once stopping.
    fn wait_running(&self) -> bool {
        let mut s = self.state.lock().expect("gate lock");
        while !s.running && !s.stopping {
            s = self.cv.wait(s).expect("gate lock");
        }
        !s.stopping
    }

    /// Sleeps until running time reaches `due`, not counting paused time.
    /// False if the pipeline stops first.
    fn sleep_until(&self, clock: &PipelineClock, due: ClockTime) -> bool {
        let mut s = self.state.lock().expect("gate lock");
        loop {
            if s.stopping {
                return false;
            }
            if !s.running {
                s = self.cv.wait(s).expect("gate lock");
                continue;
            }
            let now = clock.now();
            if now >= due {
                return true;
            }
            let wait = Duration::from_nanos(due - now);
            s = self.cv.wait_timeout(s, wait).expect("gate lock").0;
        }
    }

    fn nap(&self, d: Duration) {
        let s = self.state.lock().expect("gate lock");
        if !s.stopping {
            let _ = self.cv.wait_timeout(s, d);
        }
    }
}

#[derive(Debug, Default)]
struct Completion {
    sinks_left: usize,
    finished: bool,
    error: Option<(String, String)>,
}

pub(crate) enum Item {
    Buffer(Buffer),
    Eos,
}

struct ChainState {
    element: Box<dyn crate::element::Element>,
    inputs_eos: Vec<bool>,
}

enum NodeKind {
    Chain(Mutex<ChainState>),
    Queue {
        queue: Arc<BoundedQueue<Item>>,
        downstream_done: AtomicBool,
    },
    Source(Mutex<Option<Box<dyn Source>>>),
}

struct ExecNode {
    name: String,
    stats: Arc<ElementStats>,
    /// Peer `(node, sink pad index)` of each source pad.
    targets: Vec<(usize, usize)>,
    kind: NodeKind,
    is_sink: bool,
    done: AtomicBool,
}

pub(crate) struct ExecGraph {
    nodes: Vec<ExecNode>,
    pub(crate) gate: Gate,
    pub(crate) clock: PipelineClock,
    copies: Arc<AtomicU64>,
    frame_limit: Option<u64>,
    completion: Mutex<Completion>,
    completion_cv: Condvar,
    stop_hooks: Vec<Arc<dyn Fn() + Send + Sync>>,
}

pub(crate) struct Built {
    pub exec: Arc<ExecGraph>,
    pub stats: BTreeMap<String, Arc<ElementStats>>,
    pub controls: BTreeMap<String, Arc<dyn Control>>,
    pub handles: BTreeMap<String, Arc<dyn std::any::Any + Send + Sync>>,
}

pub(crate) fn build(
    graph: &PipelineGraph,
    repos: &RepoRegistry,
    copies: Arc<AtomicU64>,
    frame_limit: Option<u64>,
) -> Result<Built, RuntimeError> {
    graph.validate().map_err(RuntimeError::InvalidGraph)?;
    let order: Vec<&crate::graph::ElementDescriptor> = graph.elements().collect();
    let index: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, e)| (e.name.as_str(), i)).collect();

    let mut nodes = Vec::with_capacity(order.len());
    let mut stats = BTreeMap::new();
    let mut controls = BTreeMap::new();
    let mut handles = BTreeMap::new();
    let mut stop_hooks = Vec::new();

    for desc in &order {
        let layout = PadLayout {
            sinks: desc
                .pads_in(PadDirection::Sink)
                .map(|p| (p.name.clone(), p.negotiated.clone().expect("validated")))
                .collect(),
            srcs: desc
                .pads_in(PadDirection::Src)
                .map(|p| (p.name.clone(), p.negotiated.clone().expect("validated")))
                .collect(),
        };
        let targets = desc
            .pads_in(PadDirection::Src)
            .map(|p| {
                let peer = p.peer.as_ref().expect("validated");
                let peer_idx = index[peer.element.as_str()];
                let pad_idx = order[peer_idx]
                    .pads_in(PadDirection::Sink)
                    .position(|q| q.name == peer.pad)
                    .expect("peer pad exists");
                (peer_idx, pad_idx)
            })
            .collect::<Vec<_>>();
        let config = graph.config(&desc.name).expect("listed element");
        let cx = InstanceContext {
            name: &desc.name,
            pads: &layout,
            repos,
        };
        let instance = config.instantiate(&cx).map_err(|e| RuntimeError::StateChangeFailed {
            element: desc.name.clone(),
            message: e.to_string(),
        })?;
        let kind = match instance.runner {
            Runner::Chain(element) => NodeKind::Chain(Mutex::new(ChainState {
                element,
                inputs_eos: vec![false; layout.sinks.len()],
            })),
            Runner::Queue(policy) => NodeKind::Queue {
                queue: Arc::new(BoundedQueue::new(policy)),
                downstream_done: AtomicBool::new(false),
            },
            Runner::Source(s) => NodeKind::Source(Mutex::new(Some(s))),
        };
        if let Some(c) = instance.control {
            controls.insert(desc.name.clone(), c);
        }
        if let Some(h) = instance.handle {
            handles.insert(desc.name.clone(), h);
        }
        if let Some(h) = instance.stop_hook {
            stop_hooks.push(h);
        }
        let st = Arc::new(ElementStats::default());
        stats.insert(desc.name.clone(), st.clone());
        nodes.push(ExecNode {
            name: desc.name.clone(),
            stats: st,
            is_sink: targets.is_empty(),
            targets,
            kind,
            done: AtomicBool::new(false),
        });
    }
    let sinks_left = nodes.iter().filter(|n| n.is_sink).count();
    let exec = Arc::new(ExecGraph {
        nodes,
        gate: Gate::default(),
        clock: PipelineClock::default(),
        copies,
        frame_limit,
        completion: Mutex::new(Completion {
            sinks_left,
            finished: sinks_left == 0,
            error: None,
        }),
        completion_cv: Condvar::new(),
        stop_hooks,
    });
    Ok(Built {
        exec,
        stats,
        controls,
        handles,
    })
}

struct NodeOutputs<'g> {
    g: &'g ExecGraph,
    node: usize,
    downstream_ns: u64,
}

impl OutputSink for NodeOutputs<'_> {
    fn push(&mut self, pad: usize, buffer: Buffer) -> Result<Flow, ElementError> {
        let n = &self.g.nodes[self.node];
        let Some(&(peer, peer_pad)) = n.targets.get(pad) else {
            return Err(ElementError::Other(format!("no source pad {pad}")));
        };
        n.stats.add_out();
        let t0 = Instant::now();
        let r = self.g.deliver(peer, peer_pad, buffer);
        self.downstream_ns += t0.elapsed().as_nanos() as u64;
        r
    }

    fn push_eos(&mut self, pad: usize) -> Result<(), ElementError> {
        let n = &self.g.nodes[self.node];
        let Some(&(peer, peer_pad)) = n.targets.get(pad) else {
            return Ok(());
        };
        let t0 = Instant::now();
        let r = self.g.deliver_eos(peer, peer_pad);
        self.downstream_ns += t0.elapsed().as_nanos() as u64;
        r
    }

    fn record_drop(&mut self) {
        self.g.nodes[self.node].stats.add_drop();
    }
}

impl ExecGraph {
    fn fail(&self, element: &str, error: &ElementError) {
        let mut c = self.completion.lock().expect("completion lock");
        if c.error.is_none() {
            log::error!("{element}: {error}");
            c.error = Some((element.to_string(), error.to_string()));
        }
        c.finished = true;
        self.completion_cv.notify_all();
    }

    fn sink_done(&self, node: usize) {
        let n = &self.nodes[node];
        if n.is_sink && !n.done.swap(true, Ordering::SeqCst) {
            let mut c = self.completion.lock().expect("completion lock");
            c.sinks_left = c.sinks_left.saturating_sub(1);
            if c.sinks_left == 0 {
                c.finished = true;
                self.completion_cv.notify_all();
            }
        }
    }

    /// Handles a buffer arriving at `node`'s sink pad `pad` on the calling thread.
    fn deliver(&self, node: usize, pad: usize, buffer: Buffer) -> Result<Flow, ElementError> {
        let n = &self.nodes[node];
        match &n.kind {
            NodeKind::Queue {
                queue,
                downstream_done,
            } => {
                if downstream_done.load(Ordering::SeqCst) {
                    return Ok(Flow::Eos);
                }
                n.stats.add_in();
                let outcome = queue.push(Item::Buffer(buffer));
                if outcome.dropped() {
                    n.stats.add_drop();
                }
                if outcome == super::queue::PushOutcome::Closed || downstream_done.load(Ordering::SeqCst) {
                    Ok(Flow::Eos)
                } else {
                    Ok(Flow::Ok)
                }
            }
            NodeKind::Chain(state) => {
                let mut st = state.lock().expect("element lock");
                if n.done.load(Ordering::SeqCst) {
                    return Ok(Flow::Eos);
                }
                n.stats.add_in();
                let t0 = Instant::now();
                let mut sink = NodeOutputs {
                    g: self,
                    node,
                    downstream_ns: 0,
                };
                let ChainState { element, inputs_eos } = &mut *st;
                let mut out = Outputs::new(&mut sink, n.targets.len(), inputs_eos);
                let r = element.chain(pad, buffer, &mut out);
                let own = (t0.elapsed().as_nanos() as u64).saturating_sub(sink.downstream_ns);
                n.stats.add_busy(own);
                match r {
                    Err(ElementError::Downstream) => Err(ElementError::Downstream),
                    Err(e) => {
                        self.fail(&n.name, &e);
                        Err(ElementError::Downstream)
                    }
                    Ok(flow) => {
                        if n.is_sink {
                            let reached = self
                                .frame_limit
                                .is_some_and(|l| n.stats.snapshot().frames_in >= l);
                            if reached || flow == Flow::Eos {
                                self.sink_done(node);
                                return Ok(Flow::Eos);
                            }
                        }
                        Ok(flow)
                    }
                }
            }
            NodeKind::Source(_) => Err(ElementError::Other(format!("{} has no sink pads", n.name))),
        }
    }

    fn deliver_eos(&self, node: usize, pad: usize) -> Result<(), ElementError> {
        let n = &self.nodes[node];
        match &n.kind {
            NodeKind::Queue { queue, .. } => {
                queue.push_blocking(Item::Eos);
                Ok(())
            }
            NodeKind::Chain(state) => {
                let mut st = state.lock().expect("element lock");
                if st.inputs_eos.get(pad).copied().unwrap_or(true) {
                    return Ok(());
                }
                st.inputs_eos[pad] = true;
                let mut sink = NodeOutputs {
                    g: self,
                    node,
                    downstream_ns: 0,
                };
                let ChainState { element, inputs_eos } = &mut *st;
                let all = inputs_eos.iter().all(|e| *e);
                let mut out = Outputs::new(&mut sink, n.targets.len(), inputs_eos);
                let r = element.eos(pad, &mut out);
                if n.is_sink && all {
                    self.sink_done(node);
                }
                match r {
                    Err(ElementError::Downstream) => Err(ElementError::Downstream),
                    Err(e) => {
                        self.fail(&n.name, &e);
                        Err(ElementError::Downstream)
                    }
                    Ok(()) => Ok(()),
                }
            }
            NodeKind::Source(_) => Ok(()),
        }
    }

    pub(crate) fn start(self: &Arc<Self>) -> Vec<JoinHandle<()>> {
        let mut threads = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            match &n.kind {
                NodeKind::Source(slot) => {
                    let source = slot.lock().expect("source slot").take().expect("started once");
                    let g = self.clone();
                    threads.push(
                        thread::Builder::new()
                            .name(n.name.clone())
                            .spawn(move || g.run_source(i, source))
                            .expect("spawn source thread"),
                    );
                }
                NodeKind::Queue { .. } => {
                    let g = self.clone();
                    threads.push(
                        thread::Builder::new()
                            .name(n.name.clone())
                            .spawn(move || g.run_queue(i))
                            .expect("spawn queue thread"),
                    );
                }
                NodeKind::Chain(_) => {}
            }
        }
        threads
    }

    fn run_source(&self, node: usize, mut source: Box<dyn Source>) {
        let _scope = CopyScope::enter(self.copies.clone());
        let n = &self.nodes[node];
        let (peer, peer_pad) = n.targets[0];
        loop {
            if !self.gate.wait_running() {
                return;
            }
            let t0 = Instant::now();
            let produced = source.produce(&self.clock);
            match produced {
                Err(e) => {
                    self.fail(&n.name, &e);
                    return;
                }
                Ok(Produced::Pending) => self.gate.nap(Duration::from_millis(1)),
                Ok(Produced::Eos) => {
                    let _ = self.deliver_eos(peer, peer_pad);
                    return;
                }
                Ok(Produced::Buffer { buffer, due }) => {
                    n.stats.add_busy(t0.elapsed().as_nanos() as u64);
                    if let Some(due) = due {
                        if !self.gate.sleep_until(&self.clock, due) {
                            return;
                        }
                    }
                    n.stats.add_out();
                    match self.deliver(peer, peer_pad, buffer) {
                        Ok(Flow::Ok) => {}
                        Ok(Flow::Eos) => {
                            let _ = self.deliver_eos(peer, peer_pad);
                            return;
                        }
                        Err(_) => return,
                    }
                }
            }
        }
    }

    fn run_queue(&self, node: usize) {
        let _scope = CopyScope::enter(self.copies.clone());
        let n = &self.nodes[node];
        let NodeKind::Queue {
            queue,
            downstream_done,
        } = &n.kind
        else {
            return;
        };
        let (peer, peer_pad) = n.targets[0];
        loop {
            if !self.gate.wait_running() {
                return;
            }
            let item = match queue.pop_timeout(Duration::from_millis(20)) {
                None => return,
                Some(None) => continue,
                Some(Some(item)) => item,
            };
            match item {
                Item::Buffer(b) => {
                    n.stats.add_out();
                    match self.deliver(peer, peer_pad, b) {
                        Ok(Flow::Ok) => {}
                        Ok(Flow::Eos) => {
                            downstream_done.store(true, Ordering::SeqCst);
                            queue.close();
                            n.stats.add_drops(queue.flush() as u64);
                            return;
                        }
                        Err(_) => {
                            queue.close();
                            return;
                        }
                    }
                }
                Item::Eos => {
                    let _ = self.deliver_eos(peer, peer_pad);
                    return;
                }
            }
        }
    }

    pub(crate) fn set_running(&self, running: bool) {
        if running {
            self.clock.start();
        } else {
            self.clock.pause();
        }
        self.gate.set_running(running);
    }

    pub(crate) fn stop(&self) {
        self.gate.stop();
        for n in &self.nodes {
            if let NodeKind::Queue { queue, .. } = &n.kind {
                queue.close();
                queue.flush();
            }
        }
        for hook in &self.stop_hooks {
            hook();
        }
    }

    /// Waits until every sink is done or an element fails. False on timeout.
    pub(crate) fn wait(&self, timeout: Option<Duration>) -> Result<bool, RuntimeError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut c = self.completion.lock().expect("completion lock");
        while !c.finished {
            match deadline {
                None => c = self.completion_cv.wait(c).expect("completion lock"),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Ok(false);
                    }
                    c = self.completion_cv.wait_timeout(c, d - now).expect("completion lock").0;
                }
            }
        }
        match &c.error {
            Some((element, message)) => Err(RuntimeError::ElementFailed {
                element: element.clone(),
                message: message.clone(),
            }),
            None => Ok(true),
        }
    }

    pub(crate) fn error(&self) -> Option<(String, String)> {
        self.completion.lock().expect("completion lock").error.clone()
    }
}
