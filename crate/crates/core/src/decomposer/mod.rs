//! Splits a compositional expression into nested sub-expressions, simplest
//! first, using its constituency and dependency parses.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::composer::{self, structure};
use crate::parse::{ConstituencyTree, DepGraph, ParseBundle};
use crate::scene_graph::SceneGraph;

/// Token span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, other: &TokenSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// NP constituents, innermost first: by tree depth descending, then
/// left to right. A span covered by several nested NP nodes is listed once.
pub fn extract_noun_phrases(tree: &ConstituencyTree) -> Vec<TokenSpan> {
    let mut nps: Vec<(usize, TokenSpan)> = tree
        .nodes()
        .iter()
        .filter(|n| !n.is_leaf() && n.category() == "NP")
        .map(|n| (n.depth, TokenSpan::new(n.start, n.end)))
        .collect();
    nps.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(a.1.start.cmp(&b.1.start))
            .then(a.1.end.cmp(&b.1.end))
    });
    let mut seen = BTreeSet::new();
    nps.into_iter()
        .filter(|(_, s)| seen.insert(*s))
        .map(|(_, s)| s)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Scored {
    span: TokenSpan,
    head: usize,
    level: u32,
}

fn related(dep: &DepGraph, a: usize, b: usize) -> bool {
    structure::relational_args(dep, a, None).contains(&b)
        || structure::relational_args(dep, b, None).contains(&a)
}

/// Keeps a level-one span only if its head noun is a relational argument
/// of, or takes as argument, the head of some other span. Spans above level
/// one are kept as they are, and so is a lone span.
pub fn filter_referential(spans: &[TokenSpan], dep: &DepGraph) -> Vec<TokenSpan> {
    if spans.len() <= 1 {
        return spans.to_vec();
    }
    let heads: Vec<usize> = spans
        .iter()
        .map(|s| structure::span_head(dep, s.start, s.end))
        .collect();
    spans
        .iter()
        .zip(&heads)
        .filter(|(s, &h)| {
            let tok = dep.token(h);
            if !tok.is_noun() {
                return false;
            }
            if structure::relational_depth(dep, h, Some((s.start, s.end))) > 1 {
                return true;
            }
            heads
                .iter()
                .any(|&g| g != h && dep.token(g).is_noun() && related(dep, h, g))
        })
        .map(|(s, _)| *s)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeveledSpan {
    pub text: String,
    pub level: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionResult {
    /// Lowest level first; the full expression is the last entry.
    pub spans: Vec<LeveledSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
}

impl DecompositionResult {
    pub fn max_level(&self) -> u32 {
        self.spans.iter().map(|s| s.level).max().unwrap_or(0)
    }

    pub fn target(&self) -> Option<&LeveledSpan> {
        self.spans.last()
    }

    /// Distinct levels present, ascending.
    pub fn levels(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.spans.iter().map(|s| s.level).collect();
        set.into_iter().collect()
    }

    pub fn at_level(&self, level: u32) -> impl Iterator<Item = &LeveledSpan> {
        self.spans.iter().filter(move |s| s.level == level)
    }

    /// A single-level result holding only `text`.
    pub fn single(text: &str, reason: Option<String>) -> Self {
        let n = text.split_whitespace().count();
        Self {
            spans: vec![LeveledSpan {
                text: text.to_string(),
                level: 1,
                start: 0,
                end: n,
            }],
            degraded: reason,
        }
    }
}

/// Leveled nested sub-expressions of `bundle`.
///
/// Every NP constituent is scored with the relational depth of its head,
/// computed inside the span. The whole expression goes last, with the depth
/// of its syntactic head. An unresolvable head, or a filter that leaves no
/// level-one span, gives the whole expression as a single level.
pub fn decompose(bundle: &ParseBundle, graph_hint: Option<&SceneGraph>) -> DecompositionResult {
    let dep = &bundle.dep;
    let n = dep.len();
    let full_level = match graph_hint {
        Some(g) => composer::assign_level(dep, g),
        None => composer::identify_head(dep).map(|h| structure::relational_depth(dep, h, None)),
    };
    let full_level = match full_level {
        Ok(l) => l,
        Err(e) => return DecompositionResult::single(&bundle.text, Some(e.to_string())),
    };
    let full = TokenSpan::new(0, n);
    let candidates: Vec<TokenSpan> = extract_noun_phrases(&bundle.tree)
        .into_iter()
        .filter(|s| *s != full)
        .collect();
    let mut scored: Vec<Scored> = filter_referential(&candidates, dep)
        .into_iter()
        .map(|span| {
            let head = structure::span_head(dep, span.start, span.end);
            Scored {
                span,
                head,
                level: structure::relational_depth(dep, head, Some((span.start, span.end))),
            }
        })
        .filter(|s| s.level < full_level)
        .collect();
    let had_base = candidates.iter().any(|s| {
        let h = structure::span_head(dep, s.start, s.end);
        dep.token(h).is_noun() && structure::relational_depth(dep, h, Some((s.start, s.end))) == 1
    });
    if had_base && !scored.iter().any(|s| s.level == 1) {
        return DecompositionResult::single(
            &bundle.text,
            Some("no referential level-one span".to_string()),
        );
    }
    scored.sort_by_key(|s| (s.level, s.span.start, s.span.end));
    let mut spans: Vec<LeveledSpan> = scored
        .iter()
        .map(|s| LeveledSpan {
            text: dep.span_text(s.span.start, s.span.end),
            level: s.level,
            start: s.span.start,
            end: s.span.end,
        })
        .collect();
    spans.push(LeveledSpan {
        text: bundle.text.clone(),
        level: full_level,
        start: 0,
        end: n,
    });
    DecompositionResult {
        spans,
        degraded: None,
    }
}
