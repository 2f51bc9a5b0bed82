use proptest::prelude::*;

use super::*;
use crate::element::PropValue;
use crate::fixtures;
use crate::graph::PadRef;
use crate::tensor::{Caps, DataType, TensorSpec};

const F32_4: &str = "other/tensor,dimension=1:1:4:1,type=float32,framerate=30/1";

fn kinds(p: &ParsedPipeline) -> Vec<String> {
    p.graph.elements().map(|e| e.kind.clone()).collect()
}

#[test]
fn two_elements_one_link() {
    let p = parse(&format!("appsrc caps={F32_4} ! counting_sink")).unwrap();
    assert_eq!(kinds(&p), ["appsrc", "counting_sink"]);
    assert_eq!(p.graph.links().len(), 1);
    assert_eq!(p.graph.links()[0].src, PadRef::new("appsrc0", "src"));
    assert_eq!(p.graph.links()[0].sink, PadRef::new("counting_sink0", "sink"));
}

#[test]
fn every_element_has_a_span_in_the_text() {
    let text = format!("appsrc name=s caps={F32_4}\n  ! queue max-size-buffers=4 ! counting_sink name=k");
    let p = parse(&text).unwrap();
    assert_eq!(p.source_text, text);
    for e in p.graph.elements() {
        let span = p.spans[&e.name].clone();
        assert!(span.end <= text.len());
        assert!(text[span].starts_with(&e.kind), "{}", e.name);
    }
}

#[test]
fn aliases_resolve_to_canonical_names() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixtures::seeded_dense(4, 2, 0).unwrap();
    let path = dir.path().join("m.toym");
    model.write(&path).unwrap();
    let p = parse(&format!(
        "appsrc caps={F32_4} ! tensor_trans mode=arith option=mul:2 \
         ! tensor_filter frame=toy m=\"{}\" ! fakesink",
        path.display()
    ))
    .unwrap();
    assert_eq!(kinds(&p), ["appsrc", "tensor_transform", "tensor_filter", "counting_sink"]);
    let f = p.graph.element("tensor_filter0").unwrap();
    assert_eq!(f.properties["framework"], PropValue::Str("toy".into()));
    assert!(f.properties.contains_key("model"));
}

#[test]
fn spec_filter_constrains_videoscale() {
    let p = parse(
        "appsrc caps=video/x-raw,format=RGB,width=64,height=48,framerate=30/1 \
         ! queue ! videoscale ! video/x-raw,width=32,height=24 ! tensor_converter ! counting_sink",
    )
    .unwrap();
    assert_eq!(
        kinds(&p),
        ["appsrc", "queue", "videoscale", "capsfilter", "tensor_converter", "counting_sink"]
    );
    let out = p.graph.negotiated(&PadRef::new("videoscale0", "src")).unwrap();
    assert_eq!(out.to_string(), "video/x-raw,format=RGB,width=32,height=24,framerate=30/1");
    let t = p.graph.negotiated(&PadRef::new("tensor_converter0", "src")).unwrap();
    assert_eq!(
        t,
        &Caps::Tensor(TensorSpec::of([3, 32, 24, 1], DataType::U8).with_rate(crate::tensor::Framerate::fps(30)))
    );
    p.graph.validate().unwrap();
}

#[test]
fn pad_references_may_point_forward() {
    let p = parse(&format!(
        "appsrc caps={F32_4} ! m.sink_1  appsrc caps={F32_4} ! m.sink_0  tensor_mux name=m ! counting_sink"
    ))
    .unwrap();
    p.graph.validate().unwrap();
    let into_mux: Vec<_> = p.graph.links().iter().filter(|l| l.sink.element == "m").collect();
    assert_eq!(into_mux[0].src.element, "appsrc0");
    assert_eq!(into_mux[0].sink.pad, "sink_1");
}

#[test]
fn leading_zero_literal_is_not_rewritten() {
    let p = parse(&format!(
        "appsrc caps={F32_4} ! tensor_transform mode=arithmetic option=mul:0078125 ! counting_sink"
    ))
    .unwrap();
    let t = p.graph.element("tensor_transform0").unwrap();
    assert_eq!(t.properties["option"].to_string(), "mul:0078125");
    let chain = crate::transform::TransformChain::from_mode("arithmetic", Some("mul:0078125")).unwrap();
    assert_eq!(chain.to_string(), "mul:78125");
    let chain = crate::transform::TransformChain::from_mode("arithmetic", Some("mul:.0078125")).unwrap();
    assert_eq!(chain.to_string(), "mul:0.0078125");
}

#[test]
fn ars_description_counts() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures::ars(dir.path(), 4, 1).unwrap();
    let p = parse(&fx.description).unwrap();
    assert_eq!(p.graph.element_count(), fixtures::ARS_ELEMENTS);
    assert_eq!(p.graph.links().len(), fixtures::ARS_CHAIN_LINKS + fixtures::ARS_PAD_LINKS);
    let named: Vec<String> = p
        .graph
        .links()
        .iter()
        .filter(|l| l.sink.element == "mux" || l.sink.element == "merge")
        .map(|l| l.sink.to_string())
        .collect();
    for pad in ["mux.sink_0", "mux.sink_1", "merge.sink_0", "merge.sink_1"] {
        assert!(named.iter().any(|n| n == pad), "{pad} in {named:?}");
    }
    p.graph.validate().unwrap();
}

fn pnet_models(dir: &std::path::Path) -> (impl FnMut(u32, u32) -> String + '_, String) {
    let post = dir.join("post.toym");
    crate::filter::ToyModel::softmax(2).unwrap().write(&post).unwrap();
    let model = move |w: u32, h: u32| {
        let path = dir.join(format!("pnet_{w}x{h}.toym"));
        fixtures::seeded_dense(3 * w * h, 2, u64::from(w)).unwrap().write(&path).unwrap();
        path.display().to_string()
    };
    (model, post.display().to_string())
}

#[test]
fn pnet_description_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (model, post) = pnet_models(dir.path());
    let d = fixtures::pnet(
        &[(32, 24), (16, 12), (8, 6)],
        "appsrc caps=video/x-raw,format=RGB,width=64,height=48,framerate=30/1",
        model,
        &post,
    );
    let p = parse(&d).unwrap();
    // source, tee, mux, sink + 8 per layer
    assert_eq!(p.graph.element_count(), 4 + 3 * 8);
    // source!tee, mux!sink + (t. ! queue, 7 inside, filter ! mux) per layer
    assert_eq!(p.graph.links().len(), 2 + 3 * 9);
    p.graph.validate().unwrap();
    let layer = p.graph.negotiated(&PadRef::new("tensor_transform1", "src")).unwrap();
    assert_eq!(layer.as_tensor().unwrap().dim.extents(), [3, 24, 32, 1]);
}

/// Each case marks the offending character with `¦`.
const MUTATIONS: [&str; 20] = [
    "appsrc caps=x ! ¦! counting_sink",
    "¦! appsrc caps=x",
    "appsrc caps=x ¦!",
    "multifilesrc location=¦\"in_%04d.dat ! counting_sink",
    "queue ¦=3 ! counting_sink",
    "queue max-size-buffers=¦ ! counting_sink",
    "¦video/x-raw,width=32 ! queue",
    "queue ! ¦max-size-buffers=3 ! counting_sink",
    "que¦$ue ! counting_sink",
    "queue ¦name=a.b ! counting_sink",
    "tee name=t t.¦sink$0 ! queue",
    "¦\"queue\" ! counting_sink",
    "qu¦\"e\"ue=1 ! counting_sink",
    "¦a@b.src ! counting_sink",
    "¦",
    "queue ¦k$y=1 ! counting_sink",
    "tee name=t t. ! ¦! queue",
    "queue ! counting_sink\n  ¦!",
    "queue\n  ! videoscale ! video/x-raw,¦=3 ! counting_sink",
    "queue ! tensor_converter dim=1:1:4:1 ¦t.",
];

fn marked(case: &str) -> (String, usize) {
    let at = case.find('¦').expect("marker");
    (case.replacen('¦', "", 1).replace('¦', ""), at)
}

#[test]
fn mutated_descriptions_give_positioned_syntax_errors() {
    let mut failures = Vec::new();
    for (i, case) in MUTATIONS.iter().enumerate() {
        let (text, at) = marked(case);
        match parse(&text) {
            Err(e) if e.code == ParseErrorCode::SyntaxError && e.span.start == at => {
                let line = text[..at].matches('\n').count() + 1;
                let col = text[..at].rsplit('\n').next().unwrap().chars().count() + 1;
                if (e.line, e.col) != (line, col) {
                    failures.push(format!("#{i}: at {}:{} want {line}:{col}", e.line, e.col));
                }
                if e.to_string() != format!("{line}:{col}: SyntaxError: {}", e.message) {
                    failures.push(format!("#{i}: display {e}"));
                }
            }
            other => failures.push(format!("#{i} {text:?} (defect at {at}): {other:?}")),
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn semantic_errors_carry_spans() {
    let text = "queue ! no_such_kind";
    let e = parse(text).unwrap_err();
    assert_eq!(e.code, ParseErrorCode::UnknownElement);
    assert_eq!(&text[e.span.clone()], "no_such_kind");

    let text = "queue max-size-buffers=many ! counting_sink";
    let e = parse(text).unwrap_err();
    assert_eq!(e.code, ParseErrorCode::PropertyTypeError);
    assert_eq!(&text[e.span.clone()], "max-size-buffers=many");

    let text = "queue ! counting_sink  nowhere.sink_0 ! queue";
    let e = parse(text).unwrap_err();
    assert_eq!(e.code, ParseErrorCode::UnknownElement);
    assert_eq!(&text[e.span.clone()], "nowhere.sink_0");

    let text = format!("tee name=t ! queue  appsrc caps={F32_4} ! t.bogus");
    let text = text.as_str();
    let e = parse(text).unwrap_err();
    assert_eq!(e.code, ParseErrorCode::UnknownPad);
    assert_eq!(&text[e.span.clone()], "t.bogus");
}

#[test]
fn parse_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures::ars(dir.path(), 2, 3).unwrap();
    let a = parse(&fx.description).unwrap();
    let b = parse(&fx.description).unwrap();
    assert_eq!(a.graph.signature(), b.graph.signature());
}

#[test]
fn unparse_of_a_simple_chain() {
    let p = parse(&format!("appsrc caps={F32_4} ! counting_sink")).unwrap();
    assert_eq!(
        unparse(&p.graph),
        format!("appsrc name=appsrc0 caps={F32_4} ! counting_sink name=counting_sink0")
    );
}

#[test]
fn unparse_keeps_named_mux_pads() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures::ars(dir.path(), 2, 3).unwrap();
    let p = parse(&fx.description).unwrap();
    let text = unparse(&p.graph);
    assert!(text.contains("mux.sink_0") && text.contains("mux.sink_1"), "{text}");
    assert!(isomorphic(&p.graph, &parse(&text).unwrap().graph));
}

#[test]
fn corpus_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (model, post) = pnet_models(dir.path());
    let corpus = vec![
        fixtures::ars(dir.path(), 2, 3).unwrap().description,
        fixtures::pnet(
            &[(16, 12), (8, 6)],
            "appsrc caps=video/x-raw,format=RGB,width=64,height=48,framerate=30/1",
            model,
            &post,
        ),
        format!("appsrc caps={F32_4} ! tee name=t ! queue ! counting_sink t. ! valve drop=true ! appsink"),
        format!("appsrc caps={F32_4} ! tensor_split name=s sizes=1,3 dimension=1 s. ! counting_sink s. ! counting_sink")
            .replace("dimension=1", "dimension=2"),
        "appsrc caps=\"text/x-raw,format=utf8\" ! tensor_converter dim=32:1:1:1 ! filesink location=\"out dir/x.bin\"".to_string(),
    ];
    for d in corpus {
        let g = parse(&d).unwrap_or_else(|e| panic!("{e}\n{d}")).graph;
        let text = unparse(&g);
        let again = parse(&text).unwrap_or_else(|e| panic!("{e}\n{text}")).graph;
        assert!(isomorphic(&g, &again), "{d}\n{text}");
        assert_eq!(unparse(&again), text);
    }
}

/// A random acyclic description: sources, optional tee fan-out, optional
/// chains of simple elements and a mux joining some branches.
fn random_description() -> impl Strategy<Value = String> {
    let middle = prop_oneof![
        (1u32..64, 0usize..3).prop_map(|(n, l)| {
            let leak = ["none", "downstream", "upstream"][l];
            format!("queue max-size-buffers={n} leaky={leak}")
        }),
        (-5i32..5).prop_map(|k| format!("tensor_transform mode=arithmetic option=add:{k}")),
        any::<bool>().prop_map(|d| format!("valve drop={d}")),
        Just("tensor_aggregator in=1 out=2 flush=1".to_string()),
    ];
    let branch = (prop::collection::vec(middle, 0..3), any::<bool>());
    (prop::collection::vec(branch, 1..5), 0usize..3).prop_map(|(branches, fan)| {
        let mut d = String::new();
        let mut mux_pads = 0;
        for (i, (mids, to_mux)) in branches.iter().enumerate() {
            let mut chain = if i == 0 && fan > 0 {
                format!("t{i}. ")
            } else {
                format!("appsrc name=src{i} caps={F32_4} ")
            };
            for m in mids {
                chain.push_str("! ");
                chain.push_str(m);
                chain.push(' ');
            }
            if *to_mux {
                chain.push_str(&format!("! mux.sink_{mux_pads}"));
                mux_pads += 1;
            } else {
                chain.push_str("! counting_sink");
            }
            d.push_str(&chain);
            d.push('\n');
            if i == 0 && fan > 0 {
                d.push_str(&format!("appsrc name=fan caps={F32_4} ! tee name=t{i}\n"));
                for _ in 0..fan {
                    d.push_str(&format!("t{i}. ! queue ! counting_sink\n"));
                }
            }
        }
        if mux_pads > 0 {
            d.push_str("tensor_mux name=mux sync-mode=slowest ! counting_sink name=out\n");
        }
        d
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unparse_round_trip_is_isomorphic(d in random_description()) {
        let g = parse(&d).map_err(|e| TestCaseError::fail(format!("{e}\n{d}")))?.graph;
        prop_assert!(g.validate().is_ok(), "{:?}\n{}", g.validate(), d);
        let text = unparse(&g);
        let again = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?.graph;
        prop_assert!(isomorphic(&g, &again), "{}\n{}", d, text);
        prop_assert!(again.validate().is_ok());
    }

    #[test]
    fn parse_never_panics(s in "[a-z_ !.=\"/,:0-9]{0,60}") {
        let _ = parse(&s);
    }
}
