//! Pipeline graphs: elements, pads, links, negotiation and validation.
//!
//! Negotiation is a single source-to-sink pass. Sources fix their output
//! types; every other element derives its source-pad types from what arrives
//! on its sink pads. The pass is re-run after every edit, so a link whose
//! types are already known is checked the moment it is made.

mod diag;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::element::{
    ConfigError, ElementConfig, ElementFactory, Negotiation, PadDirection, PadPresence, PadTemplate,
    PropValue, Properties, RepoRole,
};
use crate::registry::Registry;
use crate::tensor::{Caps, CapsFilter};

pub use diag::{DiagCode, Diagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("an element named '{0}' already exists")]
    DuplicateName(String),
    #[error("no element kind '{0}'")]
    UnknownKind(String),
    #[error("no element named '{0}'")]
    UnknownElement(String),
    #[error("element '{element}' has no pad '{pad}'")]
    UnknownPad { element: String, pad: String },
    #[error("{kind} has no property '{key}'")]
    UnknownProperty { kind: String, key: String },
    #[error("property '{key}': {message}")]
    PropertyType { key: String, message: String },
    #[error("{kind}: {message}")]
    BadProperty { kind: String, key: Option<String>, message: String },
    #[error("{kind}: filter framework '{framework}' is not registered")]
    UnknownFramework { kind: String, framework: String },
    #[error("pad {0} is already linked")]
    PadOccupied(PadRef),
    #[error("cannot link {src} to {sink}: {message}")]
    DirectionError { src: PadRef, sink: PadRef, message: String },
    #[error("incompatible specs on {src} -> {sink}: {message}")]
    IncompatibleSpecs { src: PadRef, sink: PadRef, message: String },
}

/// `element.pad`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PadRef {
    pub element: String,
    pub pad: String,
}

impl PadRef {
    pub fn new(element: &str, pad: &str) -> Self {
        PadRef {
            element: element.to_string(),
            pad: pad.to_string(),
        }
    }
}

impl fmt::Display for PadRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.element, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct Pad {
    pub name: String,
    pub direction: PadDirection,
    pub presence: PadPresence,
    pub negotiated: Option<Caps>,
    pub peer: Option<PadRef>,
}

/// An element kind instance with its properties and pads.
#[derive(Debug, Clone)]
pub struct ElementDescriptor {
    pub kind: String,
    pub name: String,
    /// Explicitly set properties, keyed by canonical name.
    pub properties: BTreeMap<String, PropValue>,
    pub pads: Vec<Pad>,
}

impl ElementDescriptor {
    pub fn pad(&self, name: &str) -> Option<&Pad> {
        self.pads.iter().find(|p| p.name == name)
    }

    pub fn pads_in(&self, direction: PadDirection) -> impl Iterator<Item = &Pad> {
        self.pads.iter().filter(move |p| p.direction == direction)
    }
}

/// What to add: a kind, an optional instance name and raw property text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ElementSpec {
    pub kind: String,
    pub name: Option<String>,
    pub props: Vec<(String, String)>,
}

impl ElementSpec {
    pub fn new(kind: &str) -> Self {
        ElementSpec {
            kind: kind.to_string(),
            ..Default::default()
        }
    }

    pub fn name(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn prop(mut self, key: &str, value: impl ToString) -> Self {
        self.props.push((key.to_string(), value.to_string()));
        self
    }
}

impl FromStr for ElementSpec {
    type Err = crate::parse::ParseError;

    /// `kind key=value ...`, the element syntax of a pipeline description.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        crate::parse::parse_element_spec(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Link {
    pub src: PadRef,
    pub sink: PadRef,
}

#[derive(Debug, Clone)]
struct Issue {
    element: String,
    pad: Option<String>,
    message: String,
}

#[derive(Clone)]
pub(crate) struct Node {
    pub(crate) desc: ElementDescriptor,
    pub(crate) factory: Arc<dyn ElementFactory>,
    pub(crate) config: Arc<dyn ElementConfig>,
}

#[derive(Clone)]
pub struct PipelineGraph {
    registry: Arc<Registry>,
    nodes: Vec<Node>,
    links: Vec<Link>,
    issues: Vec<Issue>,
}

impl fmt::Debug for PipelineGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PipelineGraph")
            .field("elements", &self.nodes.iter().map(|n| &n.desc).collect::<Vec<_>>())
            .field("links", &self.links)
            .finish()
    }
}

impl Default for PipelineGraph {
    fn default() -> Self {
        PipelineGraph::new(Registry::shared())
    }
}

/// Sink indices and (source index, declared caps) bound to one repo slot.
type RepoEnds = (Vec<usize>, Vec<(usize, Option<Caps>)>);

impl PipelineGraph {
    pub fn new(registry: Arc<Registry>) -> Self {
        PipelineGraph {
            registry,
            nodes: Vec::new(),
            links: Vec::new(),
            issues: Vec::new(),
        }
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn elements(&self) -> impl Iterator<Item = &ElementDescriptor> {
        self.nodes.iter().map(|n| &n.desc)
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn element(&self, name: &str) -> Option<&ElementDescriptor> {
        self.nodes.iter().find(|n| n.desc.name == name).map(|n| &n.desc)
    }

    pub fn config(&self, name: &str) -> Option<&Arc<dyn ElementConfig>> {
        self.nodes.iter().find(|n| n.desc.name == name).map(|n| &n.config)
    }

    /// Negotiated type on a pad, if known.
    pub fn negotiated(&self, pad: &PadRef) -> Option<&Caps> {
        self.element(&pad.element)?.pad(&pad.pad)?.negotiated.as_ref()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.desc.name == name)
    }

    fn auto_name(&self, kind: &str) -> String {
        (0..)
            .map(|i| format!("{kind}{i}"))
            .find(|n| self.index_of(n).is_none())
            .expect("unbounded")
    }

    /// Adds an element. Returns its instance name.
    pub fn add_element(&mut self, spec: ElementSpec) -> Result<String, GraphError> {
        let factory = self
            .registry
            .factory(&spec.kind)
            .ok_or_else(|| GraphError::UnknownKind(spec.kind.clone()))?;
        let kind = factory.kind();

        let mut name = spec.name.clone();
        let mut explicit = BTreeMap::new();
        for (key, raw) in &spec.props {
            if key == "name" {
                name = Some(raw.clone());
                continue;
            }
            let prop = factory.property(key).ok_or_else(|| GraphError::UnknownProperty {
                kind: kind.to_string(),
                key: key.clone(),
            })?;
            let value = prop.parse_value(raw).map_err(|message| GraphError::PropertyType {
                key: key.clone(),
                message,
            })?;
            if explicit.insert(prop.name.to_string(), value).is_some() {
                return Err(GraphError::BadProperty {
                    kind: kind.to_string(),
                    key: Some(key.clone()),
                    message: format!("property '{}' set twice", prop.name),
                });
            }
        }
        let name = match name {
            Some(n) => {
                if self.index_of(&n).is_some() {
                    return Err(GraphError::DuplicateName(n));
                }
                n
            }
            None => self.auto_name(kind),
        };
        if let Some(missing) = factory
            .properties()
            .iter()
            .find(|p| p.required && !explicit.contains_key(p.name))
        {
            return Err(GraphError::BadProperty {
                kind: kind.to_string(),
                key: Some(missing.name.to_string()),
                message: format!("missing required property '{}'", missing.name),
            });
        }

        let props = Properties::resolve(factory.properties(), &explicit);
        let config = factory
            .configure(&props, &self.registry)
            .map_err(|e| match e {
                ConfigError::BadProperty(message) => GraphError::BadProperty {
                    kind: kind.to_string(),
                    key: None,
                    message,
                },
                ConfigError::UnknownFramework(framework) => GraphError::UnknownFramework {
                    kind: kind.to_string(),
                    framework,
                },
            })?;

        let mut pads: Vec<Pad> = factory
            .pad_templates()
            .iter()
            .filter(|t| t.presence == PadPresence::Always)
            .map(|t| Pad {
                name: t.name.to_string(),
                direction: t.direction,
                presence: PadPresence::Always,
                negotiated: None,
                peer: None,
            })
            .collect();
        for (pad, direction) in config.extra_pads() {
            pads.push(Pad {
                name: pad,
                direction,
                presence: PadPresence::Always,
                negotiated: None,
                peer: None,
            });
        }

        self.nodes.push(Node {
            desc: ElementDescriptor {
                kind: kind.to_string(),
                name: name.clone(),
                properties: explicit,
                pads,
            },
            factory,
            config,
        });
        self.renegotiate();
        Ok(name)
    }

    /// Convenience: parse `kind key=value ...` and add it.
    pub fn add(&mut self, text: &str) -> Result<String, GraphError> {
        let spec: ElementSpec = text.parse().map_err(|e: crate::parse::ParseError| {
            GraphError::BadProperty {
                kind: text.to_string(),
                key: None,
                message: e.to_string(),
            }
        })?;
        self.add_element(spec)
    }

    /// Removes an element and every link touching it.
    pub fn remove_element(&mut self, name: &str) -> Result<ElementDescriptor, GraphError> {
        let idx = self
            .index_of(name)
            .ok_or_else(|| GraphError::UnknownElement(name.to_string()))?;
        let touching: Vec<Link> = self
            .links
            .iter()
            .filter(|l| l.src.element == name || l.sink.element == name)
            .cloned()
            .collect();
        for l in touching {
            self.detach(&l);
        }
        let node = self.nodes.remove(idx);
        self.renegotiate();
        Ok(node.desc)
    }

    fn template_for(&self, idx: usize, pad: &str) -> Option<PadTemplate> {
        self.nodes[idx]
            .factory
            .pad_templates()
            .iter()
            .find(|t| t.matches(pad))
            .copied()
    }

    /// Creates a request pad. `name` may be a concrete name (`sink_2`) or a
    /// template (`sink_%u`), in which case the lowest free index is used.
    pub fn request_pad(&mut self, element: &str, name: &str) -> Result<String, GraphError> {
        let idx = self
            .index_of(element)
            .ok_or_else(|| GraphError::UnknownElement(element.to_string()))?;
        let unknown = || GraphError::UnknownPad {
            element: element.to_string(),
            pad: name.to_string(),
        };
        let factory = self.nodes[idx].factory.clone();
        let (template, concrete) = if name.contains("%u") {
            let t = factory
                .pad_templates()
                .iter()
                .find(|t| t.name == name && t.presence == PadPresence::Request)
                .copied()
                .ok_or_else(unknown)?;
            let desc = &self.nodes[idx].desc;
            let n = (0..)
                .map(|i| t.instance_name(i))
                .find(|n| desc.pad(n).is_none())
                .expect("unbounded");
            (t, n)
        } else {
            let t = self.template_for(idx, name).ok_or_else(unknown)?;
            if t.presence != PadPresence::Request {
                return Err(unknown());
            }
            (t, name.to_string())
        };
        if self.nodes[idx].desc.pad(&concrete).is_none() {
            self.nodes[idx].desc.pads.push(Pad {
                name: concrete.clone(),
                direction: template.direction,
                presence: PadPresence::Request,
                negotiated: None,
                peer: None,
            });
            // Request pads stay in index order; mux members follow it.
            self.nodes[idx].desc.pads.sort_by_key(|p| match p.presence {
                PadPresence::Always => (false, 0),
                PadPresence::Request => (true, crate::element::pad_index(&p.name).unwrap_or(usize::MAX)),
            });
        }
        Ok(concrete)
    }

    /// Picks the pad to use on `element` in `direction` when none is named:
    /// a free always-pad, else a new request pad.
    /// Makes sure `count` unlinked sink pads outside `taken` exist,
    /// requesting pads as needed.
    pub(crate) fn reserve_sink_pads(&mut self, element: &str, taken: &HashSet<String>, count: usize) {
        let Some(idx) = self.index_of(element) else { return };
        let free = self.nodes[idx]
            .desc
            .pads_in(PadDirection::Sink)
            .filter(|p| p.peer.is_none() && !taken.contains(&p.name))
            .count();
        let template = self.nodes[idx]
            .factory
            .pad_templates()
            .iter()
            .find(|t| t.direction == PadDirection::Sink && t.presence == PadPresence::Request)
            .copied();
        let Some(t) = template else { return };
        for _ in free..count {
            if self.request_pad(element, t.name).is_err() {
                return;
            }
        }
    }

    fn pick_pad(&mut self, element: &str, direction: PadDirection) -> Result<String, GraphError> {
        let idx = self
            .index_of(element)
            .ok_or_else(|| GraphError::UnknownElement(element.to_string()))?;
        let desc = &self.nodes[idx].desc;
        if let Some(p) = desc
            .pads
            .iter()
            .find(|p| p.direction == direction && p.presence == PadPresence::Always && p.peer.is_none())
            .or_else(|| desc.pads.iter().find(|p| p.direction == direction && p.peer.is_none()))
        {
            return Ok(p.name.clone());
        }
        let template = self.nodes[idx]
            .factory
            .pad_templates()
            .iter()
            .find(|t| t.direction == direction && t.presence == PadPresence::Request)
            .copied();
        match template {
            Some(t) => self.request_pad(element, t.name),
            None => {
                // Fall back to the occupied always-pad so the caller reports PadOccupied.
                let desc = &self.nodes[idx].desc;
                desc.pads
                    .iter()
                    .find(|p| p.direction == direction)
                    .map(|p| p.name.clone())
                    .ok_or_else(|| GraphError::UnknownPad {
                        element: element.to_string(),
                        pad: direction.to_string(),
                    })
            }
        }
    }

    fn resolve_pad(
        &mut self,
        element: &str,
        pad: Option<&str>,
        direction: PadDirection,
        created: &mut Vec<PadRef>,
    ) -> Result<PadRef, GraphError> {
        let idx = self
            .index_of(element)
            .ok_or_else(|| GraphError::UnknownElement(element.to_string()))?;
        let name = match pad {
            None => {
                let before = self.nodes[idx].desc.pads.len();
                let n = self.pick_pad(element, direction)?;
                if self.nodes[idx].desc.pads.len() > before {
                    created.push(PadRef::new(element, &n));
                }
                n
            }
            Some(p) if self.nodes[idx].desc.pad(p).is_some() => p.to_string(),
            Some(p) => {
                let n = self.request_pad(element, p)?;
                created.push(PadRef::new(element, &n));
                n
            }
        };
        Ok(PadRef::new(element, &name))
    }

    fn pad_mut(&mut self, r: &PadRef) -> Option<&mut Pad> {
        let idx = self.index_of(&r.element)?;
        self.nodes[idx].desc.pads.iter_mut().find(|p| p.name == r.pad)
    }

    fn pad(&self, r: &PadRef) -> Option<&Pad> {
        self.element(&r.element)?.pad(&r.pad)
    }

    fn drop_created(&mut self, created: &[PadRef]) {
        for r in created {
            if let Some(idx) = self.index_of(&r.element) {
                self.nodes[idx].desc.pads.retain(|p| p.name != r.pad);
            }
        }
    }

    /// Links `src_element.src_pad` to `sink_element.sink_pad`. Omitted pad
    /// names pick a free always-pad, then a free request pad, or request a
    /// new one.
    pub fn link(
        &mut self,
        src_element: &str,
        src_pad: Option<&str>,
        sink_element: &str,
        sink_pad: Option<&str>,
    ) -> Result<Link, GraphError> {
        let mut created = Vec::new();
        let result = self.link_inner(src_element, src_pad, sink_element, sink_pad, &mut created);
        if result.is_err() {
            self.drop_created(&created);
            self.renegotiate();
        }
        result
    }

    fn link_inner(
        &mut self,
        src_element: &str,
        src_pad: Option<&str>,
        sink_element: &str,
        sink_pad: Option<&str>,
        created: &mut Vec<PadRef>,
    ) -> Result<Link, GraphError> {
        let src = self.resolve_pad(src_element, src_pad, PadDirection::Src, created)?;
        let sink = self.resolve_pad(sink_element, sink_pad, PadDirection::Sink, created)?;
        let (s, k) = (self.pad(&src).expect("resolved"), self.pad(&sink).expect("resolved"));
        if s.direction != PadDirection::Src || k.direction != PadDirection::Sink {
            return Err(GraphError::DirectionError {
                src: src.clone(),
                sink: sink.clone(),
                message: format!("{} is a {} pad and {} is a {} pad", src, s.direction, sink, k.direction),
            });
        }
        if s.peer.is_some() {
            return Err(GraphError::PadOccupied(src));
        }
        if k.peer.is_some() {
            return Err(GraphError::PadOccupied(sink));
        }

        self.pad_mut(&src).expect("resolved").peer = Some(sink.clone());
        self.pad_mut(&sink).expect("resolved").peer = Some(src.clone());
        let link = Link {
            src: src.clone(),
            sink: sink.clone(),
        };
        self.links.push(link.clone());
        self.renegotiate();

        if let Some(issue) = self
            .issues
            .iter()
            .find(|i| i.element == sink.element && i.pad.as_deref().is_none_or(|p| p == sink.pad))
        {
            let message = issue.message.clone();
            self.detach(&link);
            return Err(GraphError::IncompatibleSpecs { src, sink, message });
        }
        Ok(link)
    }

    fn detach(&mut self, link: &Link) {
        self.links.retain(|l| l != link);
        if let Some(p) = self.pad_mut(&link.src) {
            p.peer = None;
        }
        if let Some(p) = self.pad_mut(&link.sink) {
            p.peer = None;
        }
    }

    /// Removes the link leaving `src`.
    pub fn unlink(&mut self, src: &PadRef) -> Result<Link, GraphError> {
        let link = self
            .links
            .iter()
            .find(|l| &l.src == src)
            .cloned()
            .ok_or_else(|| GraphError::UnknownPad {
                element: src.element.clone(),
                pad: src.pad.clone(),
            })?;
        self.detach(&link);
        self.renegotiate();
        Ok(link)
    }

    fn adjacency(&self) -> (DiGraph<usize, ()>, HashMap<String, usize>) {
        let index: HashMap<String, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.desc.name.clone(), i))
            .collect();
        let mut g = DiGraph::new();
        let ids: Vec<_> = (0..self.nodes.len()).map(|i| g.add_node(i)).collect();
        for l in &self.links {
            g.add_edge(ids[index[&l.src.element]], ids[index[&l.sink.element]], ());
        }
        (g, index)
    }

    /// Strongly connected groups of elements that form cycles.
    fn cycles(&self) -> Vec<Vec<usize>> {
        let (g, _) = self.adjacency();
        tarjan_scc(&g)
            .into_iter()
            .filter(|scc| scc.len() > 1 || g.contains_edge(scc[0], scc[0]))
            .map(|scc| scc.into_iter().map(|n| g[n]).collect())
            .collect()
    }

    /// Re-runs the source-to-sink negotiation pass over the whole graph.
    fn renegotiate(&mut self) {
        self.issues.clear();
        for n in &mut self.nodes {
            for p in &mut n.desc.pads {
                p.negotiated = None;
            }
        }
        let (g, index) = self.adjacency();
        // tarjan_scc yields components in reverse topological order.
        let mut order: Vec<Vec<usize>> = tarjan_scc(&g)
            .into_iter()
            .map(|scc| scc.into_iter().map(|n| g[n]).collect())
            .collect();
        order.reverse();

        for scc in order {
            if scc.len() > 1 {
                continue;
            }
            let idx = scc[0];
            let desc = &self.nodes[idx].desc;
            if self.links.iter().any(|l| l.src.element == desc.name && l.sink.element == desc.name) {
                continue;
            }
            let mut sinks = Vec::new();
            let mut ready = true;
            for p in desc.pads_in(PadDirection::Sink) {
                match &p.negotiated {
                    Some(c) => sinks.push((p.name.clone(), c.clone())),
                    None => {
                        ready = false;
                        break;
                    }
                }
            }
            let has_sink_templates = self.nodes[idx]
                .factory
                .pad_templates()
                .iter()
                .any(|t| t.direction == PadDirection::Sink);
            if !ready || (sinks.is_empty() && has_sink_templates) {
                continue;
            }
            let srcs: Vec<String> = desc.pads_in(PadDirection::Src).map(|p| p.name.clone()).collect();
            let downstream: Vec<Option<CapsFilter>> = desc
                .pads_in(PadDirection::Src)
                .map(|p| {
                    let peer = p.peer.as_ref()?;
                    let peer_idx = index[&peer.element];
                    self.nodes[peer_idx].config.sink_constraint(&peer.pad)
                })
                .collect();
            let result = self.nodes[idx].config.negotiate(&Negotiation {
                sinks: &sinks,
                srcs: &srcs,
                downstream: &downstream,
            });
            let name = desc.name.clone();
            match result {
                Ok(caps) => {
                    let assignments: Vec<(PadRef, Option<PadRef>, Caps)> = self.nodes[idx]
                        .desc
                        .pads_in(PadDirection::Src)
                        .zip(caps)
                        .map(|(p, c)| (PadRef::new(&name, &p.name), p.peer.clone(), c))
                        .collect();
                    for (src, peer, caps) in assignments {
                        if let Some(peer) = peer {
                            if let Some(pp) = self.pad_mut(&peer) {
                                pp.negotiated = Some(caps.clone());
                            }
                        }
                        if let Some(sp) = self.pad_mut(&src) {
                            sp.negotiated = Some(caps);
                        }
                    }
                }
                Err(e) => self.issues.push(Issue {
                    element: name,
                    pad: e.pad,
                    message: e.message,
                }),
            }
        }
    }

    /// Every problem that prevents execution. Pure; does not modify the graph.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut flagged: HashSet<usize> = HashSet::new();

        for (i, n) in self.nodes.iter().enumerate() {
            for p in &n.desc.pads {
                if p.peer.is_none() {
                    diags.push(Diagnostic::new(
                        DiagCode::UnlinkedPad,
                        &n.desc.name,
                        Some(&p.name),
                        format!("{} pad is not linked", p.direction),
                    ));
                    flagged.insert(i);
                }
            }
            for t in n.factory.pad_templates() {
                if t.presence == PadPresence::Request
                    && !n.desc.pads.iter().any(|p| t.matches(&p.name))
                    && !n.desc.pads.iter().any(|p| p.direction == t.direction)
                {
                    diags.push(Diagnostic::new(
                        DiagCode::UnlinkedPad,
                        &n.desc.name,
                        Some(t.name),
                        format!("needs at least one {} pad", t.direction),
                    ));
                    flagged.insert(i);
                }
            }
        }

        for cycle in self.cycles() {
            let names: Vec<&str> = cycle.iter().map(|&i| self.nodes[i].desc.name.as_str()).collect();
            diags.push(Diagnostic::new(
                DiagCode::IllegalCycle,
                names[0],
                None,
                format!(
                    "cycle through {}; break it with a tensor_reposink/tensor_reposrc pair",
                    names.join(", ")
                ),
            ));
            flagged.extend(cycle);
        }

        for issue in &self.issues {
            diags.push(Diagnostic::new(
                DiagCode::IncompatibleSpecs,
                &issue.element,
                issue.pad.as_deref(),
                issue.message.clone(),
            ));
            if let Some(i) = self.index_of(&issue.element) {
                flagged.insert(i);
            }
        }

        let mut slots: BTreeMap<String, RepoEnds> = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some((role, slot, caps)) = n.config.repo_binding() {
                let e = slots.entry(slot).or_default();
                match role {
                    RepoRole::Sink => e.0.push(i),
                    RepoRole::Src => e.1.push((i, caps)),
                }
            }
        }
        for (slot, (sinks, srcs)) in &slots {
            if sinks.len() != 1 || srcs.len() != 1 {
                let at = sinks.first().or(srcs.first().map(|(i, _)| i)).copied().unwrap_or(0);
                diags.push(Diagnostic::new(
                    DiagCode::RepoBinding,
                    &self.nodes[at].desc.name,
                    None,
                    format!(
                        "slot '{slot}' needs exactly one reposink and one reposrc, found {} and {}",
                        sinks.len(),
                        srcs.len()
                    ),
                ));
                flagged.insert(at);
                continue;
            }
            let sink = &self.nodes[sinks[0]].desc;
            let (src_idx, src_caps) = &srcs[0];
            let arriving = sink.pads_in(PadDirection::Sink).next().and_then(|p| p.negotiated.as_ref());
            if let (Some(have), Some(want)) = (arriving, src_caps) {
                if !have.is_compatible(want) {
                    diags.push(Diagnostic::new(
                        DiagCode::RepoBinding,
                        &sink.name,
                        Some("sink"),
                        format!(
                            "slot '{slot}' is declared as {want} by {} but receives {have}",
                            self.nodes[*src_idx].desc.name
                        ),
                    ));
                    flagged.insert(sinks[0]);
                }
            }
        }

        // Unresolved pads are reported only where no upstream problem explains them.
        let mut tainted = flagged.clone();
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.desc.name.as_str(), i))
            .collect();
        let mut queue: VecDeque<usize> = flagged.iter().copied().collect();
        while let Some(i) = queue.pop_front() {
            for l in self.links.iter().filter(|l| l.src.element == self.nodes[i].desc.name) {
                let j = index[l.sink.element.as_str()];
                if tainted.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if tainted.contains(&i) {
                continue;
            }
            for p in &n.desc.pads {
                if p.peer.is_some() && p.negotiated.is_none() {
                    diags.push(Diagnostic::new(
                        DiagCode::UnresolvedSpec,
                        &n.desc.name,
                        Some(&p.name),
                        "stream type could not be determined".to_string(),
                    ));
                }
            }
        }
        diags
    }

    /// Ok when every pad is linked and negotiated, and the link graph is acyclic.
    pub fn validate(&self) -> Result<(), Vec<Diagnostic>> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(d)
        }
    }

    /// Names in topological order (upstream first), ties broken by name so
    /// the order does not depend on insertion order. Cyclic parts come last.
    pub fn topological_order(&self) -> Vec<String> {
        let (g, _) = self.adjacency();
        let name = |n: petgraph::graph::NodeIndex| self.nodes[g[n]].desc.name.clone();
        let mut indegree: Vec<usize> = g
            .node_indices()
            .map(|n| g.neighbors_directed(n, petgraph::Direction::Incoming).count())
            .collect();
        let mut ready: BinaryHeap<Reverse<(String, usize)>> = g
            .node_indices()
            .filter(|n| indegree[n.index()] == 0)
            .map(|n| Reverse((name(n), n.index())))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse((n, i))) = ready.pop() {
            order.push(n);
            for next in g.neighbors_directed(petgraph::graph::NodeIndex::new(i), petgraph::Direction::Outgoing) {
                indegree[next.index()] -= 1;
                if indegree[next.index()] == 0 {
                    ready.push(Reverse((name(next), next.index())));
                }
            }
        }
        let mut rest: Vec<String> = g
            .node_indices()
            .filter(|n| indegree[n.index()] > 0)
            .map(name)
            .collect();
        rest.sort();
        order.extend(rest);
        order
    }

    /// A name-independent structural fingerprint: sorted element
    /// `(kind, props)` and link `(kind.pad -> kind.pad)` descriptions keyed by name.
    pub fn signature(&self) -> (Vec<String>, Vec<String>) {
        let mut elements: Vec<String> = self
            .nodes
            .iter()
            .map(|n| {
                let props: Vec<String> = n
                    .desc
                    .properties
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                format!("{} {} {}", n.desc.name, n.desc.kind, props.join(" "))
            })
            .collect();
        elements.sort();
        let mut links: Vec<String> = self.links.iter().map(|l| format!("{} -> {}", l.src, l.sink)).collect();
        links.sort();
        (elements, links)
    }
}

#[cfg(test)]
mod tests;
