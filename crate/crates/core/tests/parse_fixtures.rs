use std::path::PathBuf;

use groundchain::composer::{
    build_instances, identify_head, instance_parse, BuildConfig, Composer,
};
use groundchain::decomposer::{decompose, extract_noun_phrases, TokenSpan};
use groundchain::parse::{parse_bundle_ingest, write_bracketed, write_conllu, ParseBundle};
use groundchain::scene_graph::{ingest_scene_graphs, IngestFormat};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn golden(stem: &str) -> ParseBundle {
    parse_bundle_ingest(
        &fixture(&format!("parses/{stem}.ptb")),
        &fixture(&format!("parses/{stem}.conllu")),
    )
    .unwrap()
}

fn levels(b: &ParseBundle) -> Vec<(String, u32)> {
    decompose(b, None)
        .spans
        .into_iter()
        .map(|s| (s.text, s.level))
        .collect()
}

#[test]
fn rider_golden_parse_is_the_template_parse() {
    let g = ingest_scene_graphs(&fixture("rider.jsonl"), IngestFormat::TripleJsonl)
        .unwrap()
        .graphs;
    let (inst, _) = build_instances(&g[0], &Composer::default(), &BuildConfig::default(), &[]);
    let template = instance_parse(&g[0], &inst[0]).unwrap();
    let gold = golden("rider");
    assert_eq!(write_bracketed(&template.tree), write_bracketed(&gold.tree));
    assert_eq!(write_conllu(&template.dep), write_conllu(&gold.dep));
}

#[test]
fn woman_riding_a_horse() {
    let b = golden("woman_riding");
    assert_eq!(b.dep.len(), 5);
    assert_eq!(
        levels(&b),
        vec![
            ("the woman".into(), 1),
            ("a horse".into(), 1),
            ("the woman riding a horse".into(), 2)
        ]
    );
}

#[test]
fn jacket_expression_is_multi_level() {
    let b = golden("jacket");
    let nps: Vec<String> = extract_noun_phrases(&b.tree)
        .iter()
        .map(|s| b.dep.span_text(s.start, s.end))
        .collect();
    for want in [
        "a jacket",
        "the man with a jacket",
        "the person next to the man with a jacket",
        "the car behind the person next to the man with a jacket",
    ] {
        assert!(nps.iter().any(|n| n == want), "{want} missing from {nps:?}");
    }
    let want: Vec<(String, u32)> = [
        ("the car", 1),
        ("the person", 1),
        ("the man", 1),
        ("a jacket", 1),
        ("the man with a jacket", 2),
        ("the person next to the man with a jacket", 3),
        ("the car behind the person next to the man with a jacket", 4),
    ]
    .iter()
    .map(|(t, l)| (t.to_string(), *l))
    .collect();
    assert_eq!(levels(&b), want);
}

#[test]
fn shirt_head_and_noun_phrases() {
    let b = golden("shirt");
    assert_eq!(b.dep.token(identify_head(&b.dep).unwrap()).form, "shirt");
    // Hand enumeration of NP nodes, innermost first.
    assert_eq!(
        extract_noun_phrases(&b.tree),
        vec![
            TokenSpan::new(6, 9),
            TokenSpan::new(3, 5),
            TokenSpan::new(3, 9),
            TokenSpan::new(0, 2),
            TokenSpan::new(0, 9)
        ]
    );
}

#[test]
fn non_relational_phrase_is_single_level() {
    let b = golden("blue_hat");
    assert_eq!(levels(&b), vec![("a blue hat".into(), 1)]);
    assert_eq!(decompose(&b, None).degraded, None);
}
