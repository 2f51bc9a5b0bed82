use std::collections::HashSet;

use crate::element::{PadDirection, PadPresence};
use crate::graph::{Link, PipelineGraph};

fn quote(value: &str) -> String {
    let plain = !value.is_empty()
        && !value
            .chars()
            .any(|c| c.is_whitespace() || c == '!' || c == '"' || c == '\\');
    if plain {
        value.to_string()
    } else {
        let escaped = value.replace('\\', "\\\\").replace('"', "\\\"");
        format!("\"{escaped}\"")
    }
}

/// Whether a link can be written as a bare `!` between its two elements:
/// both pads are always-pads and each is the first pad of its direction, so
/// re-parsing picks exactly those pads.
fn inline(graph: &PipelineGraph, link: &Link) -> bool {
    let first = |element: &str, direction: PadDirection, pad: &str| {
        graph
            .element(element)
            .and_then(|e| e.pads_in(direction).next())
            .is_some_and(|p| p.name == pad && p.presence == PadPresence::Always)
    };
    first(&link.src.element, PadDirection::Src, &link.src.pad)
        && first(&link.sink.element, PadDirection::Sink, &link.sink.pad)
}

/// Canonical description of a graph. Every element carries an explicit
/// `name=`; links that cannot be written inline use pad references.
pub fn unparse(graph: &PipelineGraph) -> String {
    let mut chains: Vec<String> = Vec::new();
    let mut emitted: HashSet<String> = HashSet::new();
    let mut inline_links: HashSet<&Link> = HashSet::new();

    let elem_text = |name: &str| -> String {
        let e = graph.element(name).expect("listed element");
        let mut s = format!("{} name={}", e.kind, e.name);
        for (k, v) in &e.properties {
            s.push(' ');
            s.push_str(k);
            s.push('=');
            s.push_str(&quote(&v.to_string()));
        }
        s
    };

    for name in graph.topological_order() {
        if emitted.contains(&name) {
            continue;
        }
        let mut chain = elem_text(&name);
        emitted.insert(name.clone());
        let mut at = name;
        loop {
            let next = graph
                .links()
                .iter()
                .find(|l| l.src.element == at && inline(graph, l) && !emitted.contains(&l.sink.element));
            let Some(link) = next else { break };
            inline_links.insert(link);
            chain.push_str(" ! ");
            chain.push_str(&elem_text(&link.sink.element));
            emitted.insert(link.sink.element.clone());
            at = link.sink.element.clone();
        }
        chains.push(chain);
    }
    for link in graph.links() {
        if !inline_links.contains(link) {
            chains.push(format!("{} ! {}", link.src, link.sink));
        }
    }
    chains.join(" ")
}

/// Structural equality of two graphs keyed by element name: same kinds,
/// explicit properties and pad-to-pad links.
pub fn isomorphic(a: &PipelineGraph, b: &PipelineGraph) -> bool {
    a.signature() == b.signature()
}
