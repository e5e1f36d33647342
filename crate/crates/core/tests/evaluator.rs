//! Scoring against hand-computed fixtures and independent recounts.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use groundchain::composer::NestedInstance;
use groundchain::evaluator::{
    corpus_stats, iou, parse_threshold, score_grounding, score_multichoice, EvalError, EvalRecord,
    Rational,
};
use groundchain::scene_graph::BBox;
use num_rational::Ratio;
use proptest::prelude::*;
use serde_json::Value;

fn b(x0: u32, y0: u32, x1: u32, y1: u32) -> BBox {
    BBox::new(x0, y0, x1, y1).unwrap()
}

fn records(name: &str) -> Vec<EvalRecord> {
    groundchain::jsonl::read(&common::fixture(name)).unwrap()
}

fn oracle(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(common::fixture(name)).unwrap()).unwrap()
}

/// Overlap test by integer cross-multiplication, independent of `iou`.
fn passes(p: &BBox, g: &BBox, num: u64, den: u64) -> bool {
    let ix = p.x_max.min(g.x_max).saturating_sub(p.x_min.max(g.x_min)) as u128;
    let iy = p.y_max.min(g.y_max).saturating_sub(p.y_min.max(g.y_min)) as u128;
    let inter = ix * iy;
    let area = |b: &BBox| ((b.x_max - b.x_min) as u128) * ((b.y_max - b.y_min) as u128);
    let union = area(p) + area(g) - inter;
    inter * den as u128 >= num as u128 * union
}

#[test]
fn worked_iou_values() {
    assert_eq!(
        iou(&b(0, 0, 10, 10), &b(0, 0, 10, 10)),
        Ratio::from_integer(1)
    );
    assert_eq!(
        iou(&b(0, 0, 10, 10), &b(20, 20, 30, 30)),
        Ratio::from_integer(0)
    );
    assert_eq!(iou(&b(0, 0, 10, 10), &b(5, 5, 15, 15)), Ratio::new(1, 7));
    assert_eq!(
        iou(&b(0, 0, 10, 10), &b(10, 0, 20, 10)),
        Ratio::from_integer(0)
    );
}

#[test]
fn thresholds_parse_exactly() {
    assert_eq!(parse_threshold("0.5").unwrap(), Ratio::new(1, 2));
    assert_eq!(parse_threshold("0.35").unwrap(), Ratio::new(7, 20));
    assert_eq!(parse_threshold("1").unwrap(), Ratio::from_integer(1));
    assert_eq!(parse_threshold(".7").unwrap(), Ratio::new(7, 10));
    for bad in ["", ".", "1.5", "-0.1", "abc", "0.5.1"] {
        assert!(parse_threshold(bad).is_err(), "{bad:?}");
    }
}

#[test]
fn eval20_matches_oracle() {
    let recs = records("eval20.jsonl");
    let o = oracle("eval20_oracle.json");
    for t in ["0.3", "0.5", "0.7"] {
        let m = score_grounding(&recs, parse_threshold(t).unwrap());
        let want = &o[t];
        assert_eq!(m.overall.correct, want["correct"].as_u64().unwrap(), "@{t}");
        assert_eq!(m.overall.total, want["total"].as_u64().unwrap(), "@{t}");
        for (lvl, pair) in want["per_level"].as_object().unwrap() {
            let r = &m.per_level[&lvl.parse::<u32>().unwrap()];
            assert_eq!(
                [r.correct, r.total],
                [pair[0].as_u64().unwrap(), pair[1].as_u64().unwrap()],
                "@{t} L{lvl}"
            );
        }
        assert_eq!(m.missing_prediction, vec!["r14".to_string()]);
    }
    assert_eq!(
        score_grounding(&recs, Ratio::new(1, 2)).accuracy(),
        Ratio::new(1, 2)
    );
}

#[test]
fn eval20_matches_brute_force_recount() {
    let recs = records("eval20.jsonl");
    for (num, den) in [
        (0, 1),
        (1, 10),
        (3, 10),
        (1, 2),
        (2, 3),
        (7, 10),
        (9, 10),
        (1, 1),
    ] {
        let m = score_grounding(&recs, Ratio::new(num, den));
        let mut per: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
        for r in &recs {
            let e = per.entry(r.level).or_default();
            e.1 += 1;
            if r.predicted.is_some_and(|p| passes(&p, &r.gold, num, den)) {
                e.0 += 1;
            }
        }
        let total: u64 = per.values().map(|v| v.0).sum();
        assert_eq!(m.overall.correct, total, "{num}/{den}");
        for (l, (c, n)) in per {
            assert_eq!((m.per_level[&l].correct, m.per_level[&l].total), (c, n));
        }
    }
}

#[test]
fn multichoice8_matches_oracle() {
    let m = score_multichoice(&records("multichoice8.jsonl")).unwrap();
    let o = oracle("multichoice8_oracle.json");
    assert_eq!(m.overall.correct, o["correct"].as_u64().unwrap());
    assert_eq!(m.overall.total, o["total"].as_u64().unwrap());
    for (lvl, pair) in o["per_level"].as_object().unwrap() {
        let r = &m.per_level[&lvl.parse::<u32>().unwrap()];
        assert_eq!(
            [r.correct, r.total],
            [pair[0].as_u64().unwrap(), pair[1].as_u64().unwrap()]
        );
    }
    let ids = |v: &Value| {
        v.as_array()
            .unwrap()
            .iter()
            .map(|s| s.as_str().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(m.ties, ids(&o["ties"]));
    assert_eq!(m.missing_prediction, ids(&o["missing"]));
}

#[test]
fn multichoice_needs_two_candidates() {
    let mut r = records("multichoice8.jsonl").remove(0);
    r.candidates = Some(vec![r.gold]);
    assert!(matches!(
        score_multichoice(&[r.clone()]),
        Err(EvalError::Malformed { .. })
    ));
    r.candidates = None;
    assert!(matches!(
        score_multichoice(&[r]),
        Err(EvalError::Malformed { .. })
    ));
}

#[test]
fn stats10_matches_oracle() {
    let insts: Vec<NestedInstance> =
        groundchain::jsonl::read(&common::fixture("stats10.jsonl")).unwrap();
    let s = corpus_stats(&insts).unwrap();
    let o = oracle("stats10_oracle.json");
    assert_eq!(s.instances, o["instances"].as_u64().unwrap());
    assert_eq!(s.expressions, o["expressions"].as_u64().unwrap());
    assert_eq!(
        s.avg_objects.0.to_string(),
        o["avg_objects"].as_str().unwrap()
    );
    assert_eq!(
        s.avg_objects.decimal(2),
        o["avg_objects_2dp"].as_str().unwrap()
    );
    assert_eq!(
        s.avg_max_level.0.to_string(),
        o["avg_max_level"].as_str().unwrap()
    );
    assert_eq!(
        s.avg_max_level.decimal(2),
        o["avg_max_level_2dp"].as_str().unwrap()
    );
    let hist = |v: &Value| -> BTreeMap<u32, u64> {
        v.as_object()
            .unwrap()
            .iter()
            .map(|(k, n)| (k.parse().unwrap(), n.as_u64().unwrap()))
            .collect()
    };
    assert_eq!(s.max_level_histogram, hist(&o["max_level_histogram"]));
    assert_eq!(
        s.expression_level_histogram,
        hist(&o["expression_level_histogram"])
    );
}

#[test]
fn stats10_objects_recounted_from_raw_json() {
    let text = std::fs::read_to_string(common::fixture("stats10.jsonl")).unwrap();
    let mut objects = 0usize;
    let mut n = 0usize;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).unwrap();
        let heads: BTreeSet<u64> = v["expressions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["head_entity_id"].as_u64().unwrap())
            .collect();
        objects += heads.len();
        n += 1;
    }
    let insts: Vec<NestedInstance> =
        groundchain::jsonl::read(&common::fixture("stats10.jsonl")).unwrap();
    assert_eq!(
        corpus_stats(&insts).unwrap().avg_objects.0,
        Ratio::new(objects as u64, n as u64)
    );
}

#[test]
fn empty_corpus_is_an_error() {
    assert_eq!(corpus_stats(&[]), Err(EvalError::EmptyCorpus));
}

fn bbox() -> impl Strategy<Value = BBox> {
    (0u32..500, 0u32..500, 1u32..300, 1u32..300).prop_map(|(x, y, w, h)| b(x, y, x + w, y + h))
}

fn record() -> impl Strategy<Value = EvalRecord> {
    (1u32..=5, bbox(), prop::option::of(bbox())).prop_map(|(level, gold, predicted)| EvalRecord {
        id: String::new(),
        expression: String::new(),
        level,
        gold,
        predicted,
        candidates: None,
    })
}

fn threshold() -> impl Strategy<Value = Rational> {
    (0u64..=100).prop_map(|n| Ratio::new(n, 100))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), c in bbox()) {
        let v = iou(&a, &c);
        prop_assert_eq!(v, iou(&c, &a));
        prop_assert!(v <= Ratio::from_integer(1));
        prop_assert_eq!(iou(&a, &a), Ratio::from_integer(1));
        prop_assert_eq!(v == Ratio::from_integer(1), a == c);
    }

    #[test]
    fn nested_predictions_inside_gold_rank_by_size(g in bbox(), a in 1u32..=300, c in 1u32..=300) {
        let w = g.x_max - g.x_min;
        let (small, large) = (a.min(c).min(w), a.max(c).min(w));
        let inner = b(g.x_min, g.y_min, g.x_min + small, g.y_max);
        let mid = b(g.x_min, g.y_min, g.x_min + large, g.y_max);
        prop_assert!(iou(&inner, &g) <= iou(&mid, &g));
        prop_assert_eq!(iou(&inner, &g), Ratio::new(small as u64, w as u64));
    }

    #[test]
    fn accuracy_never_rises_with_threshold(recs in prop::collection::vec(record(), 1..40), t1 in threshold(), t2 in threshold()) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (a, z) = (score_grounding(&recs, lo), score_grounding(&recs, hi));
        prop_assert!(z.overall.correct <= a.overall.correct);
        for (l, r) in &z.per_level {
            prop_assert!(r.correct <= a.per_level[l].correct);
        }
    }

    #[test]
    fn overall_is_sum_of_levels(recs in prop::collection::vec(record(), 1..40), t in threshold()) {
        let m = score_grounding(&recs, t);
        prop_assert_eq!(m.per_level.values().map(|r| r.correct).sum::<u64>(), m.overall.correct);
        prop_assert_eq!(m.per_level.values().map(|r| r.total).sum::<u64>(), recs.len() as u64);
        prop_assert_eq!(m.missing_prediction.len(), recs.iter().filter(|r| r.predicted.is_none()).count());
    }

    #[test]
    fn scores_ignore_record_order(recs in prop::collection::vec(record(), 1..40), t in threshold(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
        let (a, z) = (score_grounding(&recs, t), score_grounding(&shuffled, t));
        prop_assert_eq!(a.overall, z.overall);
        prop_assert_eq!(a.per_level, z.per_level);
    }
}
