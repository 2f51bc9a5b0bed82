use std::fmt::Write as _;
use std::path::Path;

use nnpipe::tensor::spec_to_string;
use nnpipe::PipelineGraph;

use crate::launch::{load, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n"))
}

/// DOT text of a graph: one node per element, one edge per link labelled
/// with its pads and negotiated type.
pub fn to_dot(graph: &PipelineGraph) -> String {
    let mut out = String::from("digraph pipeline {\n  rankdir=LR;\n  node [shape=box];\n");
    for name in graph.topological_order() {
        let e = graph.element(&name).expect("ordered element exists");
        let _ = writeln!(out, "  {} [label={}];", quote(&name), quote(&format!("{name}\n{}", e.kind)));
    }
    for link in graph.links() {
        let caps = graph
            .negotiated(&link.src)
            .map(spec_to_string)
            .unwrap_or_default();
        let label = format!("{} -> {}\n{caps}", link.src.pad, link.sink.pad);
        let _ = writeln!(
            out,
            "  {} -> {} [label={}];",
            quote(&link.src.element),
            quote(&link.sink.element),
            quote(&label)
        );
    }
    out.push_str("}\n");
    out
}

pub fn write(graph: &PipelineGraph, path: Option<&Path>) -> anyhow::Result<()> {
    let text = to_dot(graph);
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(description: &str, output: Option<&Path>) -> u8 {
    let Some(pipeline) = load(description) else {
        return EXIT_INVALID;
    };
    match write(pipeline.graph(), output) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
