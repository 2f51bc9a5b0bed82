//! Tensor stream pipelines.
//!
//! A pipeline is a graph of elements described in a small text language:
//!
//! ```text
//! synthetic_src caps=other/tensor,dimension=1:1:4:1,type=float32,framerate=30/1 frames=10 sync=false
//!   ! tensor_transform mode=arithmetic option=mul:2 ! counting_sink name=out
//! ```
//!
//! [`Pipeline::parse`] builds and validates the graph, negotiates a stream
//! type for every link and prepares the threads that run it.
//!
//! ```
//! use nnpipe::{CountingHandle, Pipeline};
//!
//! let mut p = Pipeline::parse(
//!     "synthetic_src caps=other/tensor,dimension=1:1:4:1,type=float32,framerate=30/1 \
//!      frames=10 sync=false ! tensor_transform mode=arithmetic option=mul:2 \
//!      ! counting_sink name=out",
//! )
//! .unwrap();
//! p.run_until_eos(None).unwrap();
//! assert_eq!(p.handle::<CountingHandle>("out").unwrap().frames(), 10);
//! ```

pub mod element;
pub mod filter;
pub mod fixtures;
pub mod flow;
pub mod graph;
pub mod io;
pub mod parse;
pub mod registry;
pub mod runtime;
pub mod tensor;
pub mod transform;

use std::sync::Arc;

use element::{ElementFactory, StaticFactory};

pub use filter::{FilterModel, FilterPlugin, ModelHandle};
pub use graph::PipelineGraph;
pub use io::{AppSinkHandle, AppSrcHandle, CountingHandle};
pub use parse::{parse, parse_with, ParseError};
pub use registry::Registry;
pub use runtime::{Pipeline, PipelineState, RuntimeError};
pub use tensor::{Buffer, Caps, DataType, Payload, TensorSpec, TensorsSpec};

const BUILTINS: &[StaticFactory] = &[
    runtime::queue::QUEUE,
    runtime::elements::TEE,
    runtime::elements::VALVE,
    runtime::elements::INPUT_SELECTOR,
    runtime::elements::CAPSFILTER,
    flow::MUX,
    flow::DEMUX,
    flow::MERGE,
    flow::SPLIT,
    flow::AGGREGATOR,
    flow::REPOSINK,
    flow::REPOSRC,
    transform::CONVERTER,
    transform::TRANSFORM,
    transform::DECODER,
    transform::VIDEOSCALE,
    filter::FILTER,
    io::SYNTHETIC_SRC,
    io::MULTIFILESRC,
    io::APPSRC,
    io::COUNTING_SINK,
    io::APPSINK,
    io::FILESINK,
];

/// Every element kind that ships with the crate.
pub fn builtin_factories() -> Vec<Arc<dyn ElementFactory>> {
    BUILTINS
        .iter()
        .map(|f| Arc::new(*f) as Arc<dyn ElementFactory>)
        .collect()
}
