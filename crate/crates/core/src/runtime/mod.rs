//! Pipeline execution: states, threads, queues, path controls and statistics.

pub(crate) mod elements;
mod exec;
mod outputs;
pub(crate) mod queue;
mod stats;

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use crate::element::Control;
use crate::graph::{Diagnostic, PipelineGraph};
use crate::parse::{parse_with, ParseError};
use crate::registry::Registry;

pub use crate::flow::RepoRegistry;
pub use outputs::{Capture, Harness, OutputSink, Outputs};
pub use queue::{BoundedQueue, Leak, PushOutcome, QueuePolicy};
pub use stats::{ElementStats, StatsLine, StatsSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineState {
    Stopped,
    Paused,
    Running,
}

impl fmt::Display for PipelineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Error)]
pub enum RuntimeError {
    #[error("pipeline is not valid:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    InvalidGraph(Vec<Diagnostic>),
    #[error("state change failed at {element}: {message}")]
    StateChangeFailed { element: String, message: String },
    #[error("{element}: {message}")]
    ElementFailed { element: String, message: String },
    #[error("{0}")]
    IllegalState(String),
    #[error("no element named '{0}'")]
    UnknownElement(String),
    #[error("{element}: {message}")]
    Control { element: String, message: String },
    #[error("timed out waiting for end of stream")]
    Timeout,
}

struct Active {
    exec: Arc<exec::ExecGraph>,
    threads: Vec<JoinHandle<()>>,
}

/// A graph plus the machinery to run it.
pub struct Pipeline {
    graph: PipelineGraph,
    state: PipelineState,
    active: Option<Active>,
    stats: BTreeMap<String, Arc<ElementStats>>,
    controls: BTreeMap<String, Arc<dyn Control>>,
    handles: BTreeMap<String, Arc<dyn Any + Send + Sync>>,
    copies: Arc<AtomicU64>,
    frame_limit: Option<u64>,
    repos: RepoRegistry,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("state", &self.state)
            .field("graph", &self.graph)
            .finish()
    }
}

impl Pipeline {
    pub fn new(graph: PipelineGraph) -> Self {
        Pipeline {
            graph,
            state: PipelineState::Stopped,
            active: None,
            stats: BTreeMap::new(),
            controls: BTreeMap::new(),
            handles: BTreeMap::new(),
            copies: Arc::new(AtomicU64::new(0)),
            frame_limit: None,
            repos: RepoRegistry::new(),
        }
    }

    /// Parses a description with the process-wide registry.
    pub fn parse(description: &str) -> Result<Self, ParseError> {
        Self::parse_with(description, Registry::shared())
    }

    pub fn parse_with(description: &str, registry: Arc<Registry>) -> Result<Self, ParseError> {
        Ok(Pipeline::new(parse_with(description, registry)?.graph))
    }

    pub fn graph(&self) -> &PipelineGraph {
        &self.graph
    }

    pub fn state(&self) -> PipelineState {
        self.state
    }

    /// Ends the run once every sink has received `frames` buffers.
    pub fn set_frame_limit(&mut self, frames: Option<u64>) {
        self.frame_limit = frames;
    }

    /// Payload copies made on this pipeline's threads during the current
    /// or most recent run.
    pub fn copy_count(&self) -> u64 {
        self.copies.load(Ordering::Relaxed)
    }

    pub fn repos(&self) -> &RepoRegistry {
        &self.repos
    }

    pub fn set_state(&mut self, target: PipelineState) -> Result<PipelineState, RuntimeError> {
        use PipelineState::*;
        match (self.state, target) {
            (a, b) if a == b => {}
            (Stopped, Paused) => self.prepare()?,
            (Stopped, Running) => {
                self.prepare()?;
                self.run();
            }
            (Paused, Running) => self.run(),
            (Running, Paused) => {
                if let Some(a) = &self.active {
                    a.exec.set_running(false);
                }
                self.state = Paused;
            }
            (_, Stopped) => self.teardown(),
            _ => unreachable!("all transitions covered"),
        }
        Ok(self.state)
    }

    fn prepare(&mut self) -> Result<(), RuntimeError> {
        self.copies.store(0, Ordering::Relaxed);
        self.repos = RepoRegistry::new();
        let built = exec::build(&self.graph, &self.repos, self.copies.clone(), self.frame_limit)?;
        self.stats = built.stats;
        self.controls = built.controls;
        self.handles = built.handles;
        let threads = built.exec.start();
        self.active = Some(Active {
            exec: built.exec,
            threads,
        });
        self.state = PipelineState::Paused;
        Ok(())
    }

    fn run(&mut self) {
        if let Some(a) = &self.active {
            a.exec.set_running(true);
        }
        self.state = PipelineState::Running;
    }

    fn teardown(&mut self) {
        if let Some(a) = self.active.take() {
            a.exec.stop();
            for t in a.threads {
                let _ = t.join();
            }
        }
        self.controls.clear();
        self.state = PipelineState::Stopped;
    }

    /// Waits until every sink has finished or an element fails. Returns
    /// false if `timeout` elapses first.
    pub fn wait(&self, timeout: Option<Duration>) -> Result<bool, RuntimeError> {
        match &self.active {
            Some(a) => a.exec.wait(timeout),
            None => Err(RuntimeError::IllegalState("pipeline is not started".into())),
        }
    }

    /// Runs to end of stream (or the frame limit) and stops.
    pub fn run_until_eos(&mut self, timeout: Option<Duration>) -> Result<(), RuntimeError> {
        self.set_state(PipelineState::Running)?;
        let r = self.wait(timeout);
        self.set_state(PipelineState::Stopped)?;
        match r {
            Ok(true) => Ok(()),
            Ok(false) => Err(RuntimeError::Timeout),
            Err(e) => Err(e),
        }
    }

    /// First element failure of the current run, if any.
    pub fn error(&self) -> Option<(String, String)> {
        self.active.as_ref().and_then(|a| a.exec.error())
    }

    /// Edits the topology. Allowed while Stopped or Paused; a paused
    /// pipeline is rebuilt around the edited graph and left Paused.
    pub fn edit<R>(&mut self, f: impl FnOnce(&mut PipelineGraph) -> R) -> Result<R, RuntimeError> {
        match self.state {
            PipelineState::Running => Err(RuntimeError::IllegalState(
                "topology can only change while Stopped or Paused".into(),
            )),
            PipelineState::Stopped => Ok(f(&mut self.graph)),
            PipelineState::Paused => {
                self.teardown();
                let r = f(&mut self.graph);
                self.prepare()?;
                Ok(r)
            }
        }
    }

    /// Changes a property on a running element (valve `drop`, selector `active-pad`).
    pub fn set_property(&self, element: &str, key: &str, value: &str) -> Result<(), RuntimeError> {
        let control = self.control(element)?;
        control.set_property(key, value).map_err(|message| RuntimeError::Control {
            element: element.to_string(),
            message,
        })
    }

    pub fn get_property(&self, element: &str, key: &str) -> Result<Option<String>, RuntimeError> {
        Ok(self.control(element)?.get_property(key))
    }

    /// A handle that can change properties from another thread.
    pub fn control(&self, element: &str) -> Result<Arc<dyn Control>, RuntimeError> {
        if self.graph.element(element).is_none() {
            return Err(RuntimeError::UnknownElement(element.to_string()));
        }
        self.controls.get(element).cloned().ok_or_else(|| RuntimeError::Control {
            element: element.to_string(),
            message: "no runtime-controllable properties, or the pipeline is stopped".into(),
        })
    }

    /// Application handle of an element (app sink, counting sink, app source).
    pub fn handle<T: Any + Send + Sync>(&self, element: &str) -> Option<Arc<T>> {
        self.handles.get(element).cloned()?.downcast::<T>().ok()
    }

    /// Per-element counters, in graph order.
    pub fn stats(&self) -> Vec<(String, StatsSnapshot)> {
        self.graph
            .elements()
            .filter_map(|e| self.stats.get(&e.name).map(|s| (e.name.clone(), s.snapshot())))
            .collect()
    }

    pub fn element_stats(&self, element: &str) -> Option<StatsSnapshot> {
        self.stats.get(element).map(|s| s.snapshot())
    }

    /// A thread-safe view of the counters for periodic reporting.
    pub fn stats_source(&self) -> StatsSource {
        StatsSource {
            entries: self
                .graph
                .elements()
                .filter_map(|e| self.stats.get(&e.name).map(|s| (e.name.clone(), s.clone())))
                .collect(),
        }
    }

    pub fn stats_report(&self) -> String {
        self.stats()
            .iter()
            .map(|(n, s)| format!("{}\n", StatsLine(n, s)))
            .collect()
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        self.teardown();
    }
}

/// Shared counters that outlive borrow of the pipeline.
#[derive(Clone)]
pub struct StatsSource {
    entries: Vec<(String, Arc<ElementStats>)>,
}

impl StatsSource {
    pub fn snapshot(&self) -> Vec<(String, StatsSnapshot)> {
        self.entries.iter().map(|(n, s)| (n.clone(), s.snapshot())).collect()
    }
}

#[cfg(test)]
mod tests;
