//! Grounding accuracy, four-option selection and corpus statistics, all in
//! exact rational arithmetic.

mod report;

pub use report::{render_table, Fraction, TableReport};

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::composer::NestedInstance;
use crate::scene_graph::BBox;

pub type Rational = Ratio<u64>;

/// Intersection over union.
pub fn iou(a: &BBox, b: &BBox) -> Rational {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    Ratio::new(inter, union)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no records or instances to evaluate")]
    EmptyCorpus,
    #[error("record {id}: {reason}")]
    Malformed { id: String, reason: String },
    #[error("invalid threshold {0:?}: expected a decimal in [0, 1]")]
    Threshold(String),
}

/// Parses a decimal such as `0.5` or `0.35` exactly.
pub fn parse_threshold(s: &str) -> Result<Rational, EvalError> {
    let err = || EvalError::Threshold(s.to_string());
    let t = s.trim();
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if int.is_empty() && frac.is_empty()
        || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
        || frac.len() > 9
    {
        return Err(err());
    }
    let scale = 10u64.pow(frac.len() as u32);
    let whole: u64 = if int.is_empty() {
        0
    } else {
        int.parse().map_err(|_| err())?
    };
    let part: u64 = if frac.is_empty() {
        0
    } else {
        frac.parse().map_err(|_| err())?
    };
    let r = Ratio::new(whole * scale + part, scale);
    if r > Ratio::from_integer(1) {
        return Err(err());
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threshold(pub Rational);

impl FromStr for Threshold {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_threshold(s).map(Threshold)
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold(Ratio::new(1, 2))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub expression: String,
    pub level: u32,
    pub gold: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<BBox>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: u64,
    pub total: u64,
}

impl Tally {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += u64::from(correct);
    }

    /// `correct / total`; zero for an empty tally.
    pub fn accuracy(&self) -> Rational {
        if self.total == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(self.correct, self.total)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccuracyReport {
    pub correct: u64,
    pub total: u64,
    pub accuracy: Fraction,
}

impl From<Tally> for AccuracyReport {
    fn from(t: Tally) -> Self {
        Self {
            correct: t.correct,
            total: t.total,
            accuracy: Fraction(t.accuracy()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Grounding,
    Multichoice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub protocol: Protocol,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Fraction>,
    pub overall: AccuracyReport,
    pub per_level: BTreeMap<u32, AccuracyReport>,
    /// Records without a prediction, counted as incorrect.
    pub missing_prediction: Vec<String>,
    /// Multiple-choice records whose selection was decided by a tie-break.
    pub ties: Vec<String>,
}

impl Metrics {
    pub fn accuracy(&self) -> Rational {
        self.overall.accuracy.0
    }
}

fn tally(judged: &[(u32, bool)]) -> (Tally, BTreeMap<u32, Tally>) {
    let mut overall = Tally::default();
    let mut per_level: BTreeMap<u32, Tally> = BTreeMap::new();
    for &(level, ok) in judged {
        overall.add(ok);
        per_level.entry(level).or_default().add(ok);
    }
    (overall, per_level)
}

/// Top-1 accuracy: a record is correct iff `iou(pred, gold) ≥ threshold`.
pub fn score_grounding(records: &[EvalRecord], threshold: Rational) -> Metrics {
    let mut missing = Vec::new();
    let judged: Vec<(u32, bool)> = records
        .iter()
        .map(|r| match &r.predicted {
            Some(p) => (r.level, iou(p, &r.gold) >= threshold),
            None => {
                missing.push(r.id.clone());
                (r.level, false)
            }
        })
        .collect();
    let (overall, per_level) = tally(&judged);
    Metrics {
        protocol: Protocol::Grounding,
        threshold: Some(Fraction(threshold)),
        overall: overall.into(),
        per_level: per_level.into_iter().map(|(k, v)| (k, v.into())).collect(),
        missing_prediction: missing,
        ties: Vec::new(),
    }
}

/// Index of the candidate with the highest IoU to `target`, lowest index on
/// ties, and whether a tie occurred.
pub fn best_candidate(candidates: &[BBox], target: &BBox) -> (usize, bool) {
    let scores: Vec<Rational> = candidates.iter().map(|c| iou(c, target)).collect();
    let best = scores.iter().max().copied().unwrap_or_default();
    let first = scores.iter().position(|s| *s == best).unwrap_or(0);
    let tied = scores.iter().filter(|s| **s == best).count() > 1;
    (first, tied)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub selected: usize,
    pub gold_option: usize,
    pub tie: bool,
}

/// Option picked by the predicted box and the option matching gold.
pub fn select_option(record: &EvalRecord) -> Result<Option<Selection>, EvalError> {
    let candidates = record.candidates.as_deref().unwrap_or_default();
    if candidates.len() < 2 {
        return Err(EvalError::Malformed {
            id: record.id.clone(),
            reason: format!("{} candidates, need at least 2", candidates.len()),
        });
    }
    let gold_option = candidates
        .iter()
        .position(|c| *c == record.gold)
        .unwrap_or_else(|| best_candidate(candidates, &record.gold).0);
    Ok(record.predicted.map(|p| {
        let (selected, tie) = best_candidate(candidates, &p);
        Selection {
            selected,
            gold_option,
            tie,
        }
    }))
}

/// Four-option selection: the predicted box picks the candidate it overlaps
/// most, which must be the gold option.
pub fn score_multichoice(records: &[EvalRecord]) -> Result<Metrics, EvalError> {
    let mut missing = Vec::new();
    let mut ties = Vec::new();
    let mut judged = Vec::with_capacity(records.len());
    for r in records {
        let ok = match select_option(r)? {
            Some(s) => {
                if s.tie {
                    ties.push(r.id.clone());
                }
                s.selected == s.gold_option
            }
            None => {
                missing.push(r.id.clone());
                false
            }
        };
        judged.push((r.level, ok));
    }
    let (overall, per_level) = tally(&judged);
    Ok(Metrics {
        protocol: Protocol::Multichoice,
        threshold: None,
        overall: overall.into(),
        per_level: per_level.into_iter().map(|(k, v)| (k, v.into())).collect(),
        missing_prediction: missing,
        ties,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub instances: u64,
    pub expressions: u64,
    /// Distinct head entities across each instance's expressions, averaged.
    pub avg_objects: Fraction,
    pub avg_max_level: Fraction,
    /// Instances per `max_level`.
    pub max_level_histogram: BTreeMap<u32, u64>,
    /// Expressions per level.
    pub expression_level_histogram: BTreeMap<u32, u64>,
    pub object_count_definition: &'static str,
}

pub const OBJECT_COUNT_DEFINITION: &str =
    "distinct head entities across the instance's expression hierarchy";

pub fn corpus_stats(instances: &[NestedInstance]) -> Result<CorpusStats, EvalError> {
    if instances.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let n = instances.len() as u64;
    let mut objects = 0u64;
    let mut levels = 0u64;
    let mut max_hist = BTreeMap::new();
    let mut expr_hist = BTreeMap::new();
    let mut expressions = 0u64;
    for inst in instances {
        let heads: BTreeSet<_> = inst.expressions.iter().map(|e| e.head_entity_id).collect();
        objects += heads.len() as u64;
        levels += u64::from(inst.max_level);
        *max_hist.entry(inst.max_level).or_insert(0) += 1;
        for e in &inst.expressions {
            *expr_hist.entry(e.level).or_insert(0) += 1;
        }
        expressions += inst.expressions.len() as u64;
    }
    Ok(CorpusStats {
        instances: n,
        expressions,
        avg_objects: Fraction(Ratio::new(objects, n)),
        avg_max_level: Fraction(Ratio::new(levels, n)),
        max_level_histogram: max_hist,
        expression_level_histogram: expr_hist,
        object_count_definition: OBJECT_COUNT_DEFINITION,
    })
}
