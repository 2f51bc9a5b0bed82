//! Frame buffers and shared payloads.
//!
//! A [`Payload`] is an immutable, reference-counted byte block. Cloning a
//! payload (and therefore a [`Buffer`]) shares the bytes; the only way to get
//! write access is [`Payload::make_mut`], which copies when the block is
//! shared. Every such copy is counted globally and, when a [`CopyScope`] is
//! active on the current thread, against that scope's counter as well. The
//! runtime installs a scope on each of its threads so a pipeline can report
//! its own copy count.

use std::cell::RefCell;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{Caps, SpecError};

/// Nanoseconds since pipeline start.
pub type ClockTime = u64;

static NEXT_PAYLOAD_ID: AtomicU64 = AtomicU64::new(1);
static GLOBAL_COPIES: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static SCOPE: RefCell<Option<Arc<AtomicU64>>> = const { RefCell::new(None) };
}

/// Copy-on-write copies performed by any thread since process start.
pub fn global_copy_count() -> u64 {
    GLOBAL_COPIES.load(Ordering::Relaxed)
}

/// Routes copy accounting on the current thread to `counter` until dropped.
pub struct CopyScope {
    previous: Option<Arc<AtomicU64>>,
}

impl CopyScope {
    pub fn enter(counter: Arc<AtomicU64>) -> Self {
        let previous = SCOPE.with(|s| s.borrow_mut().replace(counter));
        CopyScope { previous }
    }
}

impl Drop for CopyScope {
    fn drop(&mut self) {
        let prev = self.previous.take();
        SCOPE.with(|s| *s.borrow_mut() = prev);
    }
}

fn record_copy() {
    GLOBAL_COPIES.fetch_add(1, Ordering::Relaxed);
    SCOPE.with(|s| {
        if let Some(c) = s.borrow().as_ref() {
            c.fetch_add(1, Ordering::Relaxed);
        }
    });
}

/// Identity of a payload allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PayloadId(pub u64);

struct Block {
    id: PayloadId,
    bytes: Vec<u8>,
}

#[derive(Clone)]
pub struct Payload {
    block: Arc<Block>,
}

impl Payload {
    pub fn from_vec(bytes: Vec<u8>) -> Self {
        Payload {
            block: Arc::new(Block {
                id: PayloadId(NEXT_PAYLOAD_ID.fetch_add(1, Ordering::Relaxed)),
                bytes,
            }),
        }
    }

    pub fn zeroed(len: usize) -> Self {
        Payload::from_vec(vec![0; len])
    }

    pub fn id(&self) -> PayloadId {
        self.block.id
    }

    /// Number of live handles to this block (diagnostic only).
    pub fn share_count(&self) -> usize {
        Arc::strong_count(&self.block)
    }

    pub fn len(&self) -> usize {
        self.block.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block.bytes.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.block.bytes
    }

    pub fn ptr_eq(&self, other: &Payload) -> bool {
        Arc::ptr_eq(&self.block, &other.block)
    }

    /// Writable bytes. Copies (and counts the copy) if the block is shared.
    pub fn make_mut(&mut self) -> &mut [u8] {
        if Arc::get_mut(&mut self.block).is_none() {
            record_copy();
            *self = Payload::from_vec(self.block.bytes.clone());
        }
        &mut Arc::get_mut(&mut self.block).expect("unique after copy").bytes
    }

    /// Takes the bytes out, copying only if the block is shared.
    pub fn into_vec(self) -> Vec<u8> {
        match Arc::try_unwrap(self.block) {
            Ok(b) => b.bytes,
            Err(shared) => {
                record_copy();
                shared.bytes.clone()
            }
        }
    }
}

impl std::ops::Deref for Payload {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        self.as_slice()
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payload")
            .field("id", &self.block.id.0)
            .field("len", &self.len())
            .field("shares", &self.share_count())
            .finish()
    }
}

/// One frame: payload memories, their type, a timestamp and a sequence number.
///
/// A single-tensor or media buffer has exactly one memory. An
/// `other/tensors` buffer has one memory per member tensor, so muxing and
/// demuxing move payload handles instead of bytes.
#[derive(Clone, Debug)]
pub struct Buffer {
    memories: Vec<Payload>,
    caps: Arc<Caps>,
    pub pts: ClockTime,
    pub seq: u64,
}

impl Buffer {
    /// Single-memory buffer. Fails if the payload length disagrees with `caps`.
    pub fn new(caps: Arc<Caps>, payload: Payload, pts: ClockTime) -> Result<Self, SpecError> {
        Buffer::from_memories(caps, vec![payload], pts)
    }

    pub fn from_memories(
        caps: Arc<Caps>,
        memories: Vec<Payload>,
        pts: ClockTime,
    ) -> Result<Self, SpecError> {
        match caps.memory_sizes() {
            Some(sizes) => {
                let actual: Vec<usize> = memories.iter().map(Payload::len).collect();
                if sizes != actual {
                    return Err(SpecError::SizeMismatch {
                        expected: sizes.iter().sum(),
                        actual: actual.iter().sum(),
                    });
                }
            }
            None if memories.len() != 1 => {
                return Err(SpecError::Arity(format!(
                    "{} expects one memory, got {}",
                    caps.media_type(),
                    memories.len()
                )))
            }
            None => {}
        }
        Ok(Buffer {
            memories,
            caps,
            pts,
            seq: 0,
        })
    }

    pub fn with_seq(mut self, seq: u64) -> Self {
        self.seq = seq;
        self
    }

    pub fn caps(&self) -> &Caps {
        &self.caps
    }

    pub fn caps_arc(&self) -> &Arc<Caps> {
        &self.caps
    }

    pub fn memories(&self) -> &[Payload] {
        &self.memories
    }

    pub fn into_memories(self) -> Vec<Payload> {
        self.memories
    }

    /// The first memory; the whole payload for non-container buffers.
    pub fn payload(&self) -> &Payload {
        &self.memories[0]
    }

    pub fn payload_mut(&mut self) -> &mut Payload {
        &mut self.memories[0]
    }

    pub fn bytes(&self) -> &[u8] {
        self.memories[0].as_slice()
    }

    pub fn total_len(&self) -> usize {
        self.memories.iter().map(Payload::len).sum()
    }

    /// Same memories re-labelled with a different type of equal layout.
    pub fn relabel(self, caps: Arc<Caps>) -> Result<Self, SpecError> {
        let (pts, seq) = (self.pts, self.seq);
        Ok(Buffer::from_memories(caps, self.memories, pts)?.with_seq(seq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{DataType, TensorSpec};

    fn u8_caps(n: u32) -> Arc<Caps> {
        Arc::new(Caps::Tensor(TensorSpec::of([n, 1, 1, 1], DataType::U8)))
    }

    #[test]
    fn clone_shares_bytes() {
        let p = Payload::from_vec(vec![1, 2, 3]);
        let q = p.clone();
        assert_eq!(p.id(), q.id());
        assert_eq!(p.share_count(), 2);
        assert!(p.ptr_eq(&q));
    }

    #[test]
    fn make_mut_copies_only_when_shared() {
        let counter = Arc::new(AtomicU64::new(0));
        let _scope = CopyScope::enter(counter.clone());

        let mut solo = Payload::from_vec(vec![1, 2, 3]);
        let id = solo.id();
        solo.make_mut()[0] = 9;
        assert_eq!(solo.id(), id);
        assert_eq!(counter.load(Ordering::Relaxed), 0);

        let other = solo.clone();
        solo.make_mut()[0] = 7;
        assert_ne!(solo.id(), other.id());
        assert_eq!(other.as_slice(), &[9, 2, 3]);
        assert_eq!(solo.as_slice(), &[7, 2, 3]);
        assert_eq!(counter.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn size_checked() {
        assert!(Buffer::new(u8_caps(3), Payload::zeroed(3), 0).is_ok());
        assert!(matches!(
            Buffer::new(u8_caps(3), Payload::zeroed(4), 0),
            Err(SpecError::SizeMismatch { expected: 3, actual: 4 })
        ));
        let octet = Arc::new(Caps::Octet {
            framerate: Default::default(),
        });
        assert!(Buffer::new(octet, Payload::zeroed(17), 0).is_ok());
    }
}
