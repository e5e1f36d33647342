//! Predicate-chain discovery: simple paths in the undirected multigraph whose
//! nodes are entities and whose edges are predicates.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::scene_graph::{EntityId, Predicate, SceneGraph};

/// Direction in which a chain traverses one predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkDirection {
    /// Walk goes subject → object.
    Forward,
    /// Walk goes object → subject.
    Backward,
}

/// Consecutive predicates share exactly one entity (the pivot); no entity is
/// visited twice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredicateChain {
    pub predicates: Vec<Predicate>,
    /// Pivot entities, `predicates.len() - 1` of them.
    pub shared_entities: Vec<EntityId>,
    /// Indices of `predicates` in the source graph.
    #[serde(skip)]
    pub predicate_indices: Vec<usize>,
    /// All visited entities, head first.
    #[serde(skip)]
    walk: Vec<EntityId>,
}

impl PredicateChain {
    /// Builds a chain from graph predicate indices, starting at `head`.
    /// Returns `None` if the sequence is not a simple path from `head`.
    pub fn from_walk(graph: &SceneGraph, head: EntityId, indices: &[usize]) -> Option<Self> {
        if indices.is_empty() {
            return None;
        }
        let mut walk = vec![head];
        let mut predicates = Vec::with_capacity(indices.len());
        for &i in indices {
            let p = graph.predicates().get(i)?;
            let cur = *walk.last().unwrap();
            let next = p.other_end(cur)?;
            if walk.contains(&next) {
                return None;
            }
            walk.push(next);
            predicates.push(p.clone());
        }
        Some(Self {
            shared_entities: walk[1..walk.len() - 1].to_vec(),
            predicates,
            predicate_indices: indices.to_vec(),
            walk,
        })
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn head(&self) -> EntityId {
        self.walk[0]
    }

    /// Entities in visiting order, head first, terminal entity last.
    pub fn walk(&self) -> &[EntityId] {
        &self.walk
    }

    pub fn directions(&self) -> Vec<LinkDirection> {
        self.predicates
            .iter()
            .zip(&self.walk)
            .map(|(p, &from)| {
                if p.subject == from {
                    LinkDirection::Forward
                } else {
                    LinkDirection::Backward
                }
            })
            .collect()
    }

    pub fn forward_links(&self) -> usize {
        self.directions()
            .iter()
            .filter(|d| **d == LinkDirection::Forward)
            .count()
    }

    /// The same path walked from the other end.
    pub fn reversed(&self, graph: &SceneGraph) -> Self {
        let idx: Vec<usize> = self.predicate_indices.iter().rev().copied().collect();
        Self::from_walk(graph, *self.walk.last().unwrap(), &idx).expect("reversal of a valid path")
    }

    /// `(more forward links, lower head id, lower predicate indices)` wins.
    fn orientation_key(&self) -> (std::cmp::Reverse<usize>, EntityId, Vec<usize>) {
        (
            std::cmp::Reverse(self.forward_links()),
            self.head(),
            self.predicate_indices.clone(),
        )
    }

    /// The preferred orientation of this path (see [`find_chains`]).
    pub fn canonical(self, graph: &SceneGraph) -> Self {
        let rev = self.reversed(graph);
        if rev.orientation_key() < self.orientation_key() {
            rev
        } else {
            self
        }
    }

    /// Can the path be extended at either end without revisiting an entity?
    pub fn is_extendable(&self, graph: &SceneGraph) -> bool {
        let ends = [self.walk[0], *self.walk.last().unwrap()];
        graph.predicates().iter().enumerate().any(|(i, p)| {
            !self.predicate_indices.contains(&i)
                && ends.iter().any(|&e| {
                    p.other_end(e)
                        .is_some_and(|other| !self.walk.contains(&other))
                })
        })
    }
}

/// Every simple path of `1..=max_depth` predicates, each reported once in its
/// canonical orientation: the direction with more subject→object links, ties
/// broken by the lower head entity id and then the lower predicate indices.
/// Output is sorted by the visited entity ids, then predicate indices.
pub fn find_chains(graph: &SceneGraph, max_depth: usize) -> Vec<PredicateChain> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    if max_depth == 0 {
        return out;
    }
    let mut walk = Vec::new();
    let mut used = Vec::new();
    for start in graph.entities() {
        walk.clear();
        walk.push(start.id);
        extend(graph, max_depth, &mut walk, &mut used, &mut |indices| {
            let chain = PredicateChain::from_walk(graph, start.id, indices)
                .expect("dfs only yields simple paths")
                .canonical(graph);
            if seen.insert(chain.predicate_indices.clone()) {
                out.push(chain);
            }
        });
    }
    out.sort_by(|a, b| (a.walk(), &a.predicate_indices).cmp(&(b.walk(), &b.predicate_indices)));
    out
}

fn extend(
    graph: &SceneGraph,
    max_depth: usize,
    walk: &mut Vec<EntityId>,
    used: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize]),
) {
    if used.len() == max_depth {
        return;
    }
    let cur = *walk.last().unwrap();
    for (i, p) in graph.predicates().iter().enumerate() {
        let Some(next) = p.other_end(cur) else {
            continue;
        };
        if walk.contains(&next) {
            continue;
        }
        walk.push(next);
        used.push(i);
        emit(used);
        extend(graph, max_depth, walk, used, emit);
        used.pop();
        walk.pop();
    }
}

/// Chains that are not contained in a longer chain of at most `max_depth`.
pub fn maximal_chains(graph: &SceneGraph, max_depth: usize) -> Vec<PredicateChain> {
    find_chains(graph, max_depth)
        .into_iter()
        .filter(|c| c.len() == max_depth || !c.is_extendable(graph))
        .collect()
}
