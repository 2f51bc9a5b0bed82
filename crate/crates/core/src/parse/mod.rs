//! The textual pipeline description language.
//!
//! ```text
//! pipeline := chain (ws chain)*
//! chain    := node (ws "!" ws node)*
//! node     := elem | padref | specfilter
//! elem     := KIND (ws KEY "=" VALUE)*
//! padref   := NAME "." [PADNAME]
//! ```
//!
//! A spec filter (`video/x-raw,width=320`) becomes a `capsfilter` element.
//! Elements are created before any link is made, so a pad reference may
//! name an element defined later in the text.

mod lexer;
mod unparse;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{ElementSpec, GraphError, PipelineGraph};
use crate::registry::Registry;
use crate::tensor::{CapsFilter, SpecError};
use lexer::{tokenize, Token, TokenKind};

pub use unparse::{isomorphic, unparse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParseErrorCode {
    SyntaxError,
    UnknownElement,
    UnknownPad,
    PropertyTypeError,
    DuplicateName,
    BadProperty,
    IncompatibleSpecs,
    PadOccupied,
    DirectionError,
}

impl fmt::Display for ParseErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A positioned error. Displays as `line:col: code: message`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {code}: {message}")]
pub struct ParseError {
    pub code: ParseErrorCode,
    /// Byte range in the description.
    pub span: Range<usize>,
    /// 1-based line.
    pub line: usize,
    /// 1-based column, in characters.
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn at(src: &str, code: ParseErrorCode, span: Range<usize>, message: impl Into<String>) -> Self {
        let start = span.start.min(src.len());
        let before = &src[..start];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        ParseError {
            code,
            span,
            line,
            col,
            message: message.into(),
        }
    }
}

/// A parsed description: the graph, the text and where each element came from.
#[derive(Debug, Clone)]
pub struct ParsedPipeline {
    pub graph: PipelineGraph,
    pub source_text: String,
    pub spans: BTreeMap<String, Range<usize>>,
}

#[derive(Debug, Clone)]
struct Prop {
    key: String,
    value: String,
    span: Range<usize>,
}

#[derive(Debug, Clone)]
struct Elem {
    kind: String,
    kind_span: Range<usize>,
    /// Created from a spec filter.
    from_filter: bool,
    name: Option<String>,
    props: Vec<Prop>,
    span: Range<usize>,
}

#[derive(Debug, Clone)]
enum Node {
    Elem(usize),
    PadRef {
        element: String,
        pad: Option<String>,
        span: Range<usize>,
    },
}

#[derive(Debug)]
struct LinkReq {
    from: Node,
    to: Node,
    bang: Range<usize>,
}

enum Word<'a> {
    Filter(&'a str),
    Prop(&'a str, &'a str),
    PadRef(&'a str, Option<&'a str>),
    Kind(&'a str),
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn classify<'a>(
    src: &str,
    raw: &str,
    text: &'a str,
    quote_at: Option<usize>,
    span: &Range<usize>,
) -> Result<Word<'a>, ParseError> {
    let syntax = |offset: usize, msg: String| {
        Err(ParseError::at(
            src,
            ParseErrorCode::SyntaxError,
            span.start + offset..span.end,
            msg,
        ))
    };
    let eq = raw.find('=');
    let slash = raw.find('/');
    if let (Some(q), None) = (quote_at, eq) {
        return syntax(q, "quoted text outside a property value".into());
    }
    if let Some(q) = quote_at {
        if q < eq.unwrap_or(usize::MAX) {
            return syntax(q, "quote inside a property name".into());
        }
    }
    if let Some(s) = slash {
        if eq.is_none_or(|e| s < e) {
            return Ok(Word::Filter(text));
        }
    }
    if let Some(e) = eq {
        let key = &text[..e];
        let value = &text[e + 1..];
        if !is_ident(key) {
            return syntax(0, format!("bad property name '{key}'"));
        }
        if value.is_empty() && quote_at.is_none() {
            return syntax(e + 1, format!("missing value for '{key}'"));
        }
        return Ok(Word::Prop(key, value));
    }
    if let Some(dot) = text.find('.') {
        let (element, pad) = (&text[..dot], &text[dot + 1..]);
        if !is_ident(element) {
            return syntax(0, format!("bad element name in pad reference '{text}'"));
        }
        if !pad.is_empty() && !pad.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '%') {
            return syntax(dot + 1, format!("bad pad name in '{text}'"));
        }
        return Ok(Word::PadRef(element, (!pad.is_empty()).then_some(pad)));
    }
    if !is_ident(text) {
        let bad = text
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '-'))
            .map_or(0, |(i, _)| i);
        return syntax(bad, format!("'{text}' is not a valid element kind"));
    }
    Ok(Word::Kind(text))
}

struct Syntax {
    elems: Vec<Elem>,
    links: Vec<LinkReq>,
}

fn parse_syntax(src: &str) -> Result<Syntax, ParseError> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err(ParseError::at(
            src,
            ParseErrorCode::SyntaxError,
            0..src.len(),
            "empty pipeline description",
        ));
    }
    let mut elems: Vec<Elem> = Vec::new();
    let mut links = Vec::new();
    // The node a following "!" links from, and the pending "!" if any.
    let mut prev: Option<(Node, bool)> = None;
    let mut bang: Option<Range<usize>> = None;
    let mut current_elem: Option<usize> = None;
    let mut pad_refs: Vec<Range<usize>> = Vec::new();

    let err = |span: Range<usize>, msg: &str| ParseError::at(src, ParseErrorCode::SyntaxError, span, msg);

    for Token { kind, span } in &tokens {
        match kind {
            TokenKind::Bang => {
                if bang.is_some() {
                    return Err(err(span.clone(), "expected an element after '!', found another '!'"));
                }
                if prev.is_none() {
                    return Err(err(span.clone(), "'!' must follow an element or pad reference"));
                }
                bang = Some(span.clone());
                current_elem = None;
            }
            TokenKind::Word { raw, text, quote_at } => {
                let node = match classify(src, raw, text, *quote_at, span)? {
                    Word::Prop(key, value) => {
                        let Some(e) = current_elem.filter(|_| bang.is_none()) else {
                            return Err(err(span.clone(), "property is not attached to an element"));
                        };
                        let elem = &mut elems[e];
                        if key == "name" {
                            if !is_ident(value) {
                                return Err(err(span.clone(), &format!("bad element name '{value}'")));
                            }
                            elem.name = Some(value.to_string());
                        } else {
                            elem.props.push(Prop {
                                key: key.to_string(),
                                value: value.to_string(),
                                span: span.clone(),
                            });
                        }
                        elem.span.end = span.end;
                        continue;
                    }
                    Word::Filter(filter) => {
                        if bang.is_none() {
                            return Err(err(
                                span.clone(),
                                "a spec filter must sit between two '!' links",
                            ));
                        }
                        if let Err(e) = filter.parse::<CapsFilter>() {
                            let offset = match &e {
                                SpecError::Syntax { offset, .. } => *offset,
                                _ => 0,
                            };
                            return Err(err(
                                span.start + offset.min(span.len())..span.end,
                                &format!("bad spec filter: {e}"),
                            ));
                        }
                        elems.push(Elem {
                            kind: "capsfilter".into(),
                            kind_span: span.clone(),
                            from_filter: true,
                            name: None,
                            props: vec![Prop {
                                key: "caps".into(),
                                value: filter.to_string(),
                                span: span.clone(),
                            }],
                            span: span.clone(),
                        });
                        current_elem = None;
                        Node::Elem(elems.len() - 1)
                    }
                    Word::PadRef(element, pad) => {
                        current_elem = None;
                        pad_refs.push(span.clone());
                        Node::PadRef {
                            element: element.to_string(),
                            pad: pad.map(str::to_string),
                            span: span.clone(),
                        }
                    }
                    Word::Kind(kind) => {
                        elems.push(Elem {
                            kind: kind.to_string(),
                            kind_span: span.clone(),
                            from_filter: false,
                            name: None,
                            props: Vec::new(),
                            span: span.clone(),
                        });
                        current_elem = Some(elems.len() - 1);
                        Node::Elem(elems.len() - 1)
                    }
                };
                let linked = match (bang.take(), prev.take()) {
                    (Some(b), Some((from, from_linked))) => {
                        // A named pad on a reference reached by "!" is the
                        // target's sink pad; linking onward picks a source pad.
                        let from = match from {
                            Node::PadRef { element, span, .. } if from_linked => Node::PadRef {
                                element,
                                pad: None,
                                span,
                            },
                            other => other,
                        };
                        links.push(LinkReq {
                            from,
                            to: node.clone(),
                            bang: b,
                        });
                        true
                    }
                    _ => false,
                };
                prev = Some((node, linked));
            }
        }
    }
    if let Some(b) = bang {
        return Err(err(b, "expected an element after '!'"));
    }
    for span in pad_refs {
        let used = |n: &Node| matches!(n, Node::PadRef { span: s, .. } if *s == span);
        if !links.iter().any(|l: &LinkReq| used(&l.from) || used(&l.to)) {
            return Err(err(span, "pad reference is not linked to anything"));
        }
    }
    Ok(Syntax { elems, links })
}

fn graph_error(src: &str, e: GraphError, elem: Option<&Elem>, fallback: Range<usize>) -> ParseError {
    let prop_span = |key: &str| -> Option<Range<usize>> {
        elem.and_then(|el| el.props.iter().find(|p| p.key == key).map(|p| p.span.clone()))
    };
    let elem_span = elem.map_or(fallback.clone(), |el| el.span.clone());
    let (code, span) = match &e {
        GraphError::UnknownKind(_) => (
            ParseErrorCode::UnknownElement,
            elem.map_or(fallback, |el| el.kind_span.clone()),
        ),
        GraphError::UnknownElement(_) => (ParseErrorCode::UnknownElement, fallback),
        GraphError::UnknownPad { .. } => (ParseErrorCode::UnknownPad, fallback),
        GraphError::UnknownProperty { key, .. } => (
            ParseErrorCode::BadProperty,
            prop_span(key).unwrap_or(elem_span),
        ),
        GraphError::PropertyType { key, .. } => (
            ParseErrorCode::PropertyTypeError,
            prop_span(key).unwrap_or(elem_span),
        ),
        GraphError::BadProperty { key, .. } => (
            ParseErrorCode::BadProperty,
            key.as_deref().and_then(prop_span).unwrap_or(elem_span),
        ),
        GraphError::UnknownFramework { .. } => (
            ParseErrorCode::UnknownElement,
            elem.and_then(|el| {
                el.props
                    .iter()
                    .find(|p| p.key == "framework" || p.key == "frame")
                    .map(|p| p.span.clone())
            })
            .unwrap_or(elem_span),
        ),
        GraphError::DuplicateName(_) => (ParseErrorCode::DuplicateName, elem_span),
        GraphError::PadOccupied(_) => (ParseErrorCode::PadOccupied, fallback),
        GraphError::DirectionError { .. } => (ParseErrorCode::DirectionError, fallback),
        GraphError::IncompatibleSpecs { .. } => (ParseErrorCode::IncompatibleSpecs, fallback),
    };
    ParseError::at(src, code, span, e.to_string())
}

/// Parses a description against the process-wide registry.
pub fn parse(description: &str) -> Result<ParsedPipeline, ParseError> {
    parse_with(description, Registry::shared())
}

pub fn parse_with(description: &str, registry: Arc<Registry>) -> Result<ParsedPipeline, ParseError> {
    let syntax = parse_syntax(description)?;
    let mut graph = PipelineGraph::new(registry.clone());

    // Explicit names are reserved before automatic names are handed out.
    let explicit: HashSet<&str> = syntax.elems.iter().filter_map(|e| e.name.as_deref()).collect();
    let mut taken: HashSet<String> = HashSet::new();
    let mut names = Vec::with_capacity(syntax.elems.len());
    for elem in &syntax.elems {
        let name = match &elem.name {
            Some(n) => n.clone(),
            None => {
                let kind = registry.canonical_kind(&elem.kind).unwrap_or(&elem.kind);
                (0..)
                    .map(|i| format!("{kind}{i}"))
                    .find(|n| !explicit.contains(n.as_str()) && !taken.contains(n))
                    .expect("unbounded")
            }
        };
        taken.insert(name.clone());
        names.push(name);
    }

    let mut spans = BTreeMap::new();
    for (elem, name) in syntax.elems.iter().zip(&names) {
        let spec = ElementSpec {
            kind: elem.kind.clone(),
            name: Some(name.clone()),
            props: elem.props.iter().map(|p| (p.key.clone(), p.value.clone())).collect(),
        };
        graph
            .add_element(spec)
            .map_err(|e| graph_error(description, e, Some(elem), elem.span.clone()))?;
        spans.insert(name.clone(), elem.span.clone());
    }

    let endpoint = |node: &Node| -> (String, Option<String>, Range<usize>) {
        match node {
            Node::Elem(i) => (names[*i].clone(), None, syntax.elems[*i].span.clone()),
            Node::PadRef { element, pad, span } => (element.clone(), pad.clone(), span.clone()),
        }
    };
    // Request every sink pad up front so that a multi-input element is not
    // negotiated while only some of its inputs are linked.
    for link in &syntax.links {
        if let (sink, Some(pad), _) = endpoint(&link.to) {
            if graph.element(&sink).is_some_and(|e| e.pad(&pad).is_none()) {
                let _ = graph.request_pad(&sink, &pad);
            }
        }
    }
    let mut named: BTreeMap<String, HashSet<String>> = BTreeMap::new();
    let mut anonymous: BTreeMap<String, usize> = BTreeMap::new();
    for link in &syntax.links {
        match endpoint(&link.to) {
            (sink, Some(pad), _) => {
                named.entry(sink).or_default().insert(pad);
            }
            (sink, None, _) => *anonymous.entry(sink).or_default() += 1,
        }
    }
    for (sink, count) in anonymous {
        let taken = named.remove(&sink).unwrap_or_default();
        graph.reserve_sink_pads(&sink, &taken, count);
    }
    for link in &syntax.links {
        let (src, src_pad, src_span) = endpoint(&link.from);
        let (sink, sink_pad, sink_span) = endpoint(&link.to);
        let result = graph.link(&src, src_pad.as_deref(), &sink, sink_pad.as_deref());
        if let Err(e) = result {
            let span = match &e {
                GraphError::UnknownElement(n) | GraphError::UnknownPad { element: n, .. } => {
                    if *n == src && matches!(link.from, Node::PadRef { .. }) {
                        src_span
                    } else if *n == sink && matches!(link.to, Node::PadRef { .. }) {
                        sink_span
                    } else {
                        link.bang.clone()
                    }
                }
                _ => link.bang.clone(),
            };
            return Err(graph_error(description, e, None, span));
        }
    }

    Ok(ParsedPipeline {
        graph,
        source_text: description.to_string(),
        spans,
    })
}

/// Parses `kind key=value ...` into an element spec without touching a registry.
pub fn parse_element_spec(text: &str) -> Result<ElementSpec, ParseError> {
    let syntax = parse_syntax(text)?;
    if syntax.elems.len() != 1 || !syntax.links.is_empty() || syntax.elems[0].from_filter {
        return Err(ParseError::at(
            text,
            ParseErrorCode::SyntaxError,
            0..text.len(),
            "expected a single element",
        ));
    }
    let e = &syntax.elems[0];
    Ok(ElementSpec {
        kind: e.kind.clone(),
        name: e.name.clone(),
        props: e.props.iter().map(|p| (p.key.clone(), p.value.clone())).collect(),
    })
}

#[cfg(test)]
mod tests;
