//! Exhaustive chain enumeration used as a reference.

use std::collections::BTreeSet;

use groundchain::composer::PredicateChain;
use groundchain::scene_graph::{EntityId, SceneGraph};

/// (walk, predicate indices) of a simple path.
pub type Path = (Vec<EntityId>, Vec<usize>);

/// Entity walk for a predicate sequence starting at `start`, if simple.
fn walk_from(g: &SceneGraph, start: EntityId, seq: &[usize]) -> Option<Vec<EntityId>> {
    let mut walk = vec![start];
    for &i in seq {
        let p = &g.predicates()[i];
        let cur = *walk.last().unwrap();
        let next = if p.subject == cur {
            p.object
        } else if p.object == cur {
            p.subject
        } else {
            return None;
        };
        if walk.contains(&next) {
            return None;
        }
        walk.push(next);
    }
    Some(walk)
}

fn forward(g: &SceneGraph, walk: &[EntityId], seq: &[usize]) -> usize {
    seq.iter()
        .zip(walk)
        .filter(|(&i, &from)| g.predicates()[i].subject == from)
        .count()
}

/// Every ordered selection of distinct predicates of length 1..=depth,
/// tried from both ends of its first predicate; each undirected path kept
/// once, in the orientation with more forward links, then lower head id,
/// then lower indices.
pub fn brute_force(g: &SceneGraph, depth: usize) -> Vec<Path> {
    let n = g.predicates().len();
    let mut seqs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut all = seqs.clone();
    for _ in 1..depth {
        seqs = seqs
            .iter()
            .flat_map(|s| {
                (0..n)
                    .filter(move |i| !s.contains(i))
                    .map(move |i| [s.clone(), vec![i]].concat())
            })
            .collect();
        all.extend(seqs.iter().cloned());
    }
    let mut found: BTreeSet<(Vec<usize>, Vec<EntityId>)> = BTreeSet::new();
    for seq in &all {
        let first = &g.predicates()[seq[0]];
        for start in [first.subject, first.object] {
            if let Some(walk) = walk_from(g, start, seq) {
                found.insert((seq.clone(), walk));
            }
        }
    }
    let mut paths: BTreeSet<Path> = BTreeSet::new();
    for (seq, walk) in &found {
        let rseq: Vec<usize> = seq.iter().rev().copied().collect();
        let rwalk: Vec<EntityId> = walk.iter().rev().copied().collect();
        let a = (
            std::cmp::Reverse(forward(g, walk, seq)),
            walk[0],
            seq.clone(),
        );
        let b = (
            std::cmp::Reverse(forward(g, &rwalk, &rseq)),
            rwalk[0],
            rseq.clone(),
        );
        paths.insert(if b < a {
            (rwalk, rseq)
        } else {
            (walk.clone(), seq.clone())
        });
    }
    paths.into_iter().collect()
}

pub fn as_paths(chains: &[PredicateChain]) -> Vec<Path> {
    chains
        .iter()
        .map(|c| (c.walk().to_vec(), c.predicate_indices.clone()))
        .collect()
}

pub fn rider_graph() -> SceneGraph {
    groundchain::scene_graph::ingest_scene_graphs(
        &super::fixture("rider.jsonl"),
        groundchain::scene_graph::IngestFormat::TripleJsonl,
    )
    .unwrap()
    .graphs
    .remove(0)
}
