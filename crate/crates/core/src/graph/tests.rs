use super::*;
use crate::filter::ToyModel;
use crate::parse::parse;
use crate::tensor::{DataType, Framerate, TensorSpec};

fn graph() -> PipelineGraph {
    PipelineGraph::default()
}

fn src(caps: &str) -> ElementSpec {
    ElementSpec::new("appsrc").prop("caps", caps)
}

const F32_4: &str = "other/tensor,dimension=1:1:4:1,type=float32,framerate=30/1";

fn dense_model(dir: &std::path::Path, name: &str, in_dim: u32, out_dim: u32) -> String {
    let n = (in_dim * out_dim) as usize;
    let m = ToyModel::dense(in_dim, out_dim, vec![0.01; n], vec![0.0; out_dim as usize]).unwrap();
    let path = dir.join(name);
    m.write(&path).unwrap();
    path.display().to_string()
}

#[test]
fn add_converter_with_properties() {
    let mut g = graph();
    let name = g.add("tensor_converter name=c dim=1:1:32:1 type=float32").unwrap();
    assert_eq!(name, "c");
    let c = g.element("c").unwrap();
    assert_eq!(c.kind, "tensor_converter");
    assert!(c.pad("sink").is_some() && c.pad("src").is_some());
    assert_eq!(c.properties.len(), 2);
}

#[test]
fn duplicate_names_are_rejected() {
    let mut g = graph();
    g.add("queue name=q").unwrap();
    assert_eq!(g.add("tee name=q"), Err(GraphError::DuplicateName("q".into())));
    assert_eq!(g.element_count(), 1);
}

#[test]
fn unknown_kind_and_property() {
    let mut g = graph();
    assert_eq!(g.add("no_such_thing"), Err(GraphError::UnknownKind("no_such_thing".into())));
    assert!(matches!(g.add("queue bogus=1"), Err(GraphError::UnknownProperty { .. })));
    assert!(matches!(g.add("queue max-size-buffers=zero"), Err(GraphError::PropertyType { .. })));
}

#[test]
fn filter_without_model_is_a_bad_property() {
    let mut g = graph();
    match g.add("tensor_filter framework=toy") {
        Err(GraphError::BadProperty { key, .. }) => assert_eq!(key.as_deref(), Some("model")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unregistered_framework() {
    let mut g = graph();
    assert!(matches!(
        g.add("tensor_filter framework=tflite model=x"),
        Err(GraphError::UnknownFramework { .. })
    ));
}

#[test]
fn wildcard_sink_adopts_upstream_spec() {
    let mut g = graph();
    g.add_element(src("application/octet-stream,framerate=30/1").name("s")).unwrap();
    g.add("tensor_converter name=c dim=1:1:32:1 type=float32").unwrap();
    g.add("tensor_aggregator name=a in=1 out=1 flush=1").unwrap();
    g.link("s", None, "c", None).unwrap();
    g.link("c", None, "a", None).unwrap();
    let want = Caps::Tensor(TensorSpec::of([1, 1, 32, 1], DataType::F32).with_rate(Framerate::fps(30)));
    assert_eq!(g.negotiated(&PadRef::new("c", "src")), Some(&want));
    assert_eq!(g.negotiated(&PadRef::new("a", "sink")), Some(&want));
}


#[test]
fn float_into_uint8_model_is_incompatible() {
    let dir = tempfile::tempdir().unwrap();
    let model = dense_model(dir.path(), "m.toym", 4, 2);
    let mut g = graph();
    g.add_element(src("other/tensor,dimension=1:1:4:1,type=uint8,framerate=30/1").name("s"))
        .unwrap();
    g.add_element(ElementSpec::new("tensor_filter").name("f").prop("framework", "toy").prop("model", &model))
        .unwrap();
    let err = g.link("s", None, "f", None).unwrap_err();
    assert!(matches!(err, GraphError::IncompatibleSpecs { .. }), "{err}");
    assert!(g.links().is_empty());
    assert!(g.element("s").unwrap().pad("src").unwrap().peer.is_none());
}

#[test]
fn two_source_pads_cannot_link() {
    let mut g = graph();
    g.add_element(src(F32_4).name("a")).unwrap();
    g.add_element(src(F32_4).name("b")).unwrap();
    assert!(matches!(
        g.link("a", Some("src"), "b", Some("src")),
        Err(GraphError::DirectionError { .. })
    ));
}

#[test]
fn occupied_pads() {
    let mut g = graph();
    g.add_element(src(F32_4).name("a")).unwrap();
    g.add("queue name=q1").unwrap();
    g.add("queue name=q2").unwrap();
    g.link("a", None, "q1", None).unwrap();
    assert!(matches!(
        g.link("a", Some("src"), "q2", None),
        Err(GraphError::PadOccupied(p)) if p == PadRef::new("a", "src")
    ));
}

#[test]
fn unknown_pad() {
    let mut g = graph();
    g.add("queue name=q").unwrap();
    assert!(matches!(g.request_pad("q", "sink_3"), Err(GraphError::UnknownPad { .. })));
}

#[test]
fn unlinked_mux_pad_is_named() {
    let mut g = graph();
    g.add_element(src(F32_4).name("a")).unwrap();
    g.add("tensor_mux name=mux").unwrap();
    g.add("counting_sink name=out").unwrap();
    g.request_pad("mux", "sink_1").unwrap();
    g.link("a", None, "mux", Some("sink_0")).unwrap();
    g.link("mux", None, "out", None).unwrap();
    let diags = g.validate().unwrap_err();
    assert!(
        diags
            .iter()
            .any(|d| d.code == DiagCode::UnlinkedPad && d.element == "mux" && d.pad.as_deref() == Some("sink_1")),
        "{diags:?}"
    );
}

fn recurrent(dir: &std::path::Path, back_edge: bool) -> String {
    let model = dense_model(dir, "rnn.toym", 8, 4);
    let state = "other/tensor,dimension=1:1:4:1,type=float32";
    let back = if back_edge {
        "t. ! queue ! mux.sink_1".to_string()
    } else {
        format!(
            "t. ! queue ! tensor_reposink slot=h \
             tensor_reposrc slot=h caps={state} rate=30 ! mux.sink_1"
        )
    };
    format!(
        "synthetic_src caps={F32_4} frames=10 sync=false ! mux.sink_0 \
         tensor_mux name=mux ! tensor_filter framework=toy model=\"{model}\" ! tee name=t \
         t. ! queue ! counting_sink name=out {back}"
    )
}

#[test]
fn repo_pair_cuts_the_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let p = parse(&recurrent(dir.path(), false)).unwrap();
    assert_eq!(p.graph.validate(), Ok(()));
}

#[test]
fn direct_back_edge_is_an_illegal_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let p = parse(&recurrent(dir.path(), true)).unwrap();
    let diags = p.graph.validate().unwrap_err();
    assert!(diags.iter().any(|d| d.code == DiagCode::IllegalCycle), "{diags:?}");
}

#[test]
fn validate_is_pure_and_idempotent() {
    let mut g = parse(&format!("appsrc caps={F32_4} ! tensor_mux name=m ! counting_sink")).unwrap().graph;
    g.request_pad("m", "sink_1").unwrap();
    let before = g.signature();
    let a = g.diagnostics();
    assert!(!a.is_empty());
    assert_eq!(a, g.diagnostics());
    assert_eq!(before, g.signature());
}

#[test]
fn validated_graph_agrees_on_both_ends() {
    let p = parse(&format!(
        "appsrc caps={F32_4} ! tee name=t ! queue ! tensor_mux name=m ! counting_sink t. ! queue ! m.sink_1"
    ))
    .unwrap();
    p.graph.validate().unwrap();
    for l in p.graph.links() {
        let a = p.graph.negotiated(&l.src).expect("src negotiated");
        let b = p.graph.negotiated(&l.sink).expect("sink negotiated");
        assert_eq!(a, b, "{} -> {}", l.src, l.sink);
    }
}

#[test]
fn removing_a_link_reports_exactly_its_pads() {
    let p = parse(&format!("appsrc name=s caps={F32_4} ! queue name=q ! counting_sink name=k")).unwrap();
    let mut g = p.graph;
    g.validate().unwrap();
    g.unlink(&PadRef::new("q", "src")).unwrap();
    let mut pads: Vec<(String, Option<String>)> = g
        .diagnostics()
        .into_iter()
        .filter(|d| d.code == DiagCode::UnlinkedPad)
        .map(|d| (d.element, d.pad))
        .collect();
    pads.sort();
    assert_eq!(pads, vec![("k".into(), Some("sink".into())), ("q".into(), Some("src".into()))]);
}

#[test]
fn remove_element_unlinks_neighbours() {
    let p = parse(&format!("appsrc name=s caps={F32_4} ! queue name=q ! counting_sink name=k")).unwrap();
    let mut g = p.graph;
    g.remove_element("q").unwrap();
    assert!(g.links().is_empty());
    assert!(g.element("s").unwrap().pad("src").unwrap().peer.is_none());
    assert!(g.remove_element("q").is_err());
}

#[test]
fn topological_order_puts_sources_first() {
    let p = parse(&format!("counting_sink name=k  appsrc name=s caps={F32_4} ! queue name=q ! k.")).unwrap();
    assert_eq!(p.graph.topological_order(), vec!["s", "q", "k"]);
}
