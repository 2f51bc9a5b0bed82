use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use crate::element::props::LEAK_VALUES;
use crate::element::{
    ConfigError, ElementConfig, ElementError, Instance, InstanceContext, Negotiation, NegotiationError,
    PadDirection, PadTemplate, PropKind, PropSpec, Runner, StaticFactory,
};
use crate::tensor::Caps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Leak {
    /// Block the producer while full.
    #[default]
    None,
    /// Discard the incoming item while full.
    DropNewest,
    /// Discard the oldest queued item to make room.
    DropOldest,
}

impl FromStr for Leak {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match LEAK_VALUES.iter().find(|(spelling, _)| *spelling == s).map(|(_, c)| *c) {
            Some("none") => Ok(Leak::None),
            Some("drop_newest") => Ok(Leak::DropNewest),
            Some("drop_oldest") => Ok(Leak::DropOldest),
            _ => Err(format!("unknown leak policy '{s}'")),
        }
    }
}

impl fmt::Display for Leak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Leak::None => "none",
            Leak::DropNewest => "drop_newest",
            Leak::DropOldest => "drop_oldest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuePolicy {
    pub max_buffers: usize,
    pub leak: Leak,
}

impl QueuePolicy {
    pub const DEFAULT_MAX_BUFFERS: usize = 16;

    pub fn new(max_buffers: usize, leak: Leak) -> Self {
        assert!(max_buffers >= 1, "a queue holds at least one buffer");
        QueuePolicy { max_buffers, leak }
    }
}

impl Default for QueuePolicy {
    fn default() -> Self {
        QueuePolicy::new(Self::DEFAULT_MAX_BUFFERS, Leak::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Accepted,
    /// Accepted after waiting for room.
    BlockedThenAccepted,
    /// The incoming item was discarded.
    DroppedNewest,
    /// The item was queued and the oldest queued item discarded.
    DroppedOldest,
    /// The queue was closed; the item was discarded.
    Closed,
}

impl PushOutcome {
    pub fn dropped(self) -> bool {
        matches!(self, PushOutcome::DroppedNewest | PushOutcome::DroppedOldest)
    }
}

struct State<T> {
    items: VecDeque<T>,
    closed: bool,
    dropped: u64,
}

/// A bounded FIFO shared between one or more producers and a consumer.
pub struct BoundedQueue<T> {
    policy: QueuePolicy,
    state: Mutex<State<T>>,
    not_empty: Condvar,
    not_full: Condvar,
}

impl<T> std::fmt::Debug for BoundedQueue<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundedQueue")
            .field("policy", &self.policy)
            .field("len", &self.len())
            .finish()
    }
}

impl<T> BoundedQueue<T> {
    pub fn new(policy: QueuePolicy) -> Self {
        BoundedQueue {
            policy,
            state: Mutex::new(State {
                items: VecDeque::new(),
                closed: false,
                dropped: 0,
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
        }
    }

    pub fn policy(&self) -> QueuePolicy {
        self.policy
    }

    pub fn push(&self, item: T) -> PushOutcome {
        self.push_with(item, self.policy.leak)
    }

    /// Pushes ignoring the leak policy: waits for room if needed. Used for
    /// end-of-stream markers, which must never be dropped.
    pub fn push_blocking(&self, item: T) -> PushOutcome {
        self.push_with(item, Leak::None)
    }

    fn push_with(&self, item: T, leak: Leak) -> PushOutcome {
        let mut s = self.state.lock().expect("queue lock");
        if s.closed {
            return PushOutcome::Closed;
        }
        let mut outcome = PushOutcome::Accepted;
        if s.items.len() >= self.policy.max_buffers {
            match leak {
                Leak::None => {
                    while s.items.len() >= self.policy.max_buffers && !s.closed {
                        s = self.not_full.wait(s).expect("queue lock");
                    }
                    if s.closed {
                        return PushOutcome::Closed;
                    }
                    outcome = PushOutcome::BlockedThenAccepted;
                }
                Leak::DropNewest => {
                    s.dropped += 1;
                    return PushOutcome::DroppedNewest;
                }
                Leak::DropOldest => {
                    s.items.pop_front();
                    s.dropped += 1;
                    outcome = PushOutcome::DroppedOldest;
                }
            }
        }
        s.items.push_back(item);
        self.not_empty.notify_one();
        outcome
    }

    /// Waits for an item. `None` once the queue is closed and empty.
    pub fn pop(&self) -> Option<T> {
        let mut s = self.state.lock().expect("queue lock");
        loop {
            if let Some(item) = s.items.pop_front() {
                self.not_full.notify_one();
                return Some(item);
            }
            if s.closed {
                return None;
            }
            s = self.not_empty.wait(s).expect("queue lock");
        }
    }

    /// Like [`pop`](Self::pop) but gives up after `timeout`. The outer
    /// `None` means the queue is closed and drained.
    pub fn pop_timeout(&self, timeout: Duration) -> Option<Option<T>> {
        let mut s = self.state.lock().expect("queue lock");
        if s.items.is_empty() && !s.closed {
            s = self.not_empty.wait_timeout(s, timeout).expect("queue lock").0;
        }
        if let Some(item) = s.items.pop_front() {
            self.not_full.notify_one();
            return Some(Some(item));
        }
        if s.closed {
            None
        } else {
            Some(None)
        }
    }

    pub fn try_pop(&self) -> Option<T> {
        let mut s = self.state.lock().expect("queue lock");
        let item = s.items.pop_front();
        if item.is_some() {
            self.not_full.notify_one();
        }
        item
    }

    /// Rejects further pushes and wakes every waiter. Queued items stay
    /// available to `pop`.
    pub fn close(&self) {
        let mut s = self.state.lock().expect("queue lock");
        s.closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().expect("queue lock").closed
    }

    /// Discards every queued item.
    pub fn flush(&self) -> usize {
        let mut s = self.state.lock().expect("queue lock");
        let n = s.items.len();
        s.items.clear();
        self.not_full.notify_all();
        n
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("queue lock").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().expect("queue lock").dropped
    }

    /// A copy of the queued items, oldest first.
    pub fn snapshot(&self) -> Vec<T>
    where
        T: Clone,
    {
        self.state.lock().expect("queue lock").items.iter().cloned().collect()
    }
}

const QUEUE_PROPS: &[PropSpec] = &[
    PropSpec::new(
        "max-size-buffers",
        PropKind::Int { min: 1, max: 1 << 20 },
        "buffers held before the leak policy applies",
    )
    .aliases(&["max-buffers", "max_buffers"])
    .default("16"),
    PropSpec::new("leaky", PropKind::Enum(LEAK_VALUES), "what to do when full")
        .aliases(&["leak"])
        .default("none"),
];

const QUEUE_PADS: &[PadTemplate] = &[
    PadTemplate::always("sink", PadDirection::Sink, "ANY"),
    PadTemplate::always("src", PadDirection::Src, "ANY"),
];

#[derive(Debug)]
struct QueueConfig(QueuePolicy);

pub(crate) const QUEUE: StaticFactory = StaticFactory {
    kind: "queue",
    aliases: &[],
    description: "Bounded buffer and thread boundary",
    properties: QUEUE_PROPS,
    pads: QUEUE_PADS,
    configure: |props, _| {
        let max = props.int("max-size-buffers").unwrap_or(16) as usize;
        let leak: Leak = props
            .str("leaky")
            .unwrap_or("none")
            .parse()
            .map_err(ConfigError::BadProperty)?;
        Ok(Arc::new(QueueConfig(QueuePolicy::new(max, leak))))
    },
};

impl ElementConfig for QueueConfig {
    fn negotiate(&self, n: &Negotiation<'_>) -> Result<Vec<Caps>, NegotiationError> {
        Ok(vec![n.single_input().clone()])
    }

    fn instantiate(&self, _: &InstanceContext<'_>) -> Result<Instance, ElementError> {
        Ok(Instance {
            runner: Runner::Queue(self.0),
            control: None,
            handle: None,
            stop_hook: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    #[test]
    fn drop_oldest_keeps_newest() {
        let q = BoundedQueue::new(QueuePolicy::new(2, Leak::DropOldest));
        assert_eq!(q.push(1), PushOutcome::Accepted);
        assert_eq!(q.push(2), PushOutcome::Accepted);
        assert_eq!(q.push(3), PushOutcome::DroppedOldest);
        assert_eq!(q.snapshot(), vec![2, 3]);
        assert_eq!(q.dropped(), 1);
    }

    #[test]
    fn drop_newest_keeps_occupancy() {
        let q = BoundedQueue::new(QueuePolicy::new(2, Leak::DropNewest));
        q.push(1);
        q.push(2);
        assert_eq!(q.push(3), PushOutcome::DroppedNewest);
        assert_eq!(q.snapshot(), vec![1, 2]);
        assert_eq!(q.dropped(), 1);
    }

    #[test]
    fn leak_none_blocks_until_pop() {
        let q = Arc::new(BoundedQueue::new(QueuePolicy::new(1, Leak::None)));
        q.push(1);
        let producer = {
            let q = q.clone();
            thread::spawn(move || q.push(2))
        };
        thread::sleep(Duration::from_millis(50));
        assert_eq!(q.len(), 1);
        assert_eq!(q.pop(), Some(1));
        assert_eq!(producer.join().unwrap(), PushOutcome::BlockedThenAccepted);
        assert_eq!(q.pop(), Some(2));
    }

    #[test]
    fn close_releases_blocked_producer() {
        let q = Arc::new(BoundedQueue::new(QueuePolicy::new(1, Leak::None)));
        q.push(1);
        let producer = {
            let q = q.clone();
            thread::spawn(move || q.push(2))
        };
        thread::sleep(Duration::from_millis(20));
        q.close();
        assert_eq!(producer.join().unwrap(), PushOutcome::Closed);
        assert_eq!(q.pop(), Some(1));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn leak_spellings() {
        assert_eq!("downstream".parse::<Leak>(), Ok(Leak::DropOldest));
        assert_eq!("2".parse::<Leak>(), Ok(Leak::DropOldest));
        assert_eq!("upstream".parse::<Leak>(), Ok(Leak::DropNewest));
        assert!("x".parse::<Leak>().is_err());
    }
}
