//! Shared inputs for the benchmarks under `benches/`.

use std::sync::Arc;

use nnpipe::io::{generate, Generator};
use nnpipe::{Buffer, Caps, DataType, TensorSpec};

/// A seeded random frame of the given shape and type.
pub fn frame(extents: [u32; 4], dtype: DataType, seed: u64) -> Buffer {
    let caps = Caps::Tensor(TensorSpec::of(extents, dtype));
    let memories = generate(&caps, Generator::Random(seed), 0);
    Buffer::from_memories(Arc::new(caps), memories, 0).expect("generated frame matches its caps")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_sized_and_reproducible() {
        let a = frame([3, 4, 5, 1], DataType::U16, 1);
        assert_eq!(a.total_len(), 120);
        assert_eq!(a.bytes(), frame([3, 4, 5, 1], DataType::U16, 1).bytes());
    }
}
