//! Head-noun identification and relational depth over dependency parses.
//!
//! An expression's level is the number of relational steps from its head
//! noun down to the most deeply nested noun: `1 + max(level(arg))` over the
//! head's relational arguments, `1` for a bare noun phrase.

use std::collections::BTreeSet;

use crate::parse::DepGraph;

/// Relations that stay inside one noun phrase's name or that join
/// coordinated/appositive nouns rather than relating them.
const NON_RELATIONAL: &[&str] = &[
    "compound",
    "flat",
    "fixed",
    "det",
    "amod",
    "nummod",
    "punct",
    "cc",
    "conj",
    "appos",
    "goeswith",
    "reparandum",
    "list",
];

fn in_scope(scope: Option<(usize, usize)>, i: usize) -> bool {
    scope.is_none_or(|(s, e)| i >= s && i < e)
}

/// Nouns reachable below `from` through non-noun tokens only.
fn nearest_nouns(
    dep: &DepGraph,
    from: usize,
    scope: Option<(usize, usize)>,
    skip: Option<usize>,
) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack: Vec<usize> = dep.children(from).iter().rev().copied().collect();
    while let Some(c) = stack.pop() {
        if Some(c) == skip || !in_scope(scope, c) {
            continue;
        }
        let tok = dep.token(c);
        if NON_RELATIONAL.contains(&tok.base_deprel()) {
            continue;
        }
        if tok.is_noun() {
            out.push(c);
        } else {
            stack.extend(dep.children(c).iter().rev());
        }
    }
    out
}

/// Nouns one relational step away from `n`.
///
/// Besides nouns below `n`, a subject also relates to the other arguments of
/// its predicate when that predicate is the top of the scope: the copular
/// `X is behind Y` (predicate nominal `Y`) and the verbal `X has Y`.
pub fn relational_args(dep: &DepGraph, n: usize, scope: Option<(usize, usize)>) -> Vec<usize> {
    let mut args = nearest_nouns(dep, n, scope, None);
    let tok = dep.token(n);
    if tok.base_deprel() == "nsubj" {
        if let Some(p) = tok.head {
            let predicate_on_top = dep.token(p).head.is_none_or(|h| !in_scope(scope, h));
            if in_scope(scope, p) && predicate_on_top {
                if dep.token(p).is_noun() {
                    args.push(p);
                } else {
                    args.extend(nearest_nouns(dep, p, scope, Some(n)));
                }
            }
        }
    }
    args
}

/// Relational depth of `head` using only tokens in `scope` (`None` = all).
pub fn relational_depth(dep: &DepGraph, head: usize, scope: Option<(usize, usize)>) -> u32 {
    fn go(
        dep: &DepGraph,
        n: usize,
        scope: Option<(usize, usize)>,
        visited: &mut BTreeSet<usize>,
    ) -> u32 {
        visited.insert(n);
        let mut best = 0;
        for a in relational_args(dep, n, scope) {
            if !visited.contains(&a) {
                best = best.max(go(dep, a, scope, visited));
            }
        }
        visited.remove(&n);
        1 + best
    }
    go(dep, head, scope, &mut BTreeSet::new())
}

/// Syntactic head noun of the whole parse.
///
/// A noun root is the head unless it is a copular predicate, in which case
/// its subject is promoted ("the man is behind the woman" → man). A verbal
/// root promotes its nominal subject. Otherwise the shallowest, leftmost
/// noun is used.
pub fn head_noun(dep: &DepGraph) -> Option<usize> {
    let root = dep.root();
    let subject = dep
        .children(root)
        .iter()
        .copied()
        .find(|&c| dep.token(c).base_deprel() == "nsubj" && dep.token(c).is_noun());
    if dep.token(root).is_noun() {
        let copular = dep
            .children(root)
            .iter()
            .any(|&c| dep.token(c).base_deprel() == "cop");
        return Some(match subject {
            Some(s) if copular => s,
            _ => root,
        });
    }
    if subject.is_some() {
        return subject;
    }
    (0..dep.len())
        .filter(|&i| dep.token(i).is_noun())
        .min_by_key(|&i| (dep.depth(i), i))
}

/// Highest token inside `[start, end)`: the one whose head lies outside the
/// span, preferring the shallowest and then the leftmost.
pub fn span_head(dep: &DepGraph, start: usize, end: usize) -> usize {
    (start..end)
        .min_by_key(|&i| (dep.depth(i), i))
        .expect("span is non-empty")
}
