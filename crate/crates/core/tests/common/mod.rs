#![allow(dead_code)]

pub mod oracle;
pub mod server;

use std::path::PathBuf;

use groundchain::scene_graph::{BBox, Entity, EntityId, Predicate, SceneGraph};
use proptest::prelude::*;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub const NAMES: &[&str] = &[
    "man", "woman", "horse", "dog", "hat", "chair", "table", "car",
];
pub const RELATIONS: &[&str] = &[
    "riding",
    "behind",
    "on",
    "next to",
    "has",
    "holding",
    "near",
    "under",
    "sitting on",
    "wearing",
];

/// Graph with `1..=max_entities` entities and up to `max_predicates`
/// distinct non-reflexive predicates. Names may repeat.
pub fn graph_strategy(
    max_entities: usize,
    max_predicates: usize,
) -> impl Strategy<Value = SceneGraph> {
    (1..=max_entities)
        .prop_flat_map(move |n| {
            let ents = prop::collection::vec(
                (0..NAMES.len(), 0u32..500, 0u32..400, 1u32..140, 1u32..80),
                n,
            );
            let preds = prop::collection::vec(
                (1..=n as u64, 1..=n as u64, 0..RELATIONS.len()),
                0..=max_predicates,
            );
            (ents, preds)
        })
        .prop_map(|(ents, preds)| {
            let entities: Vec<Entity> = ents
                .iter()
                .enumerate()
                .map(|(i, &(name, x, y, w, h))| Entity {
                    id: EntityId(i as u64 + 1),
                    name: NAMES[name].to_string(),
                    bbox: BBox::new(x, y, x + w, y + h).unwrap(),
                })
                .collect();
            let mut predicates: Vec<Predicate> = Vec::new();
            for (s, o, r) in preds {
                let p = Predicate::new(s, RELATIONS[r], o);
                if s != o && !predicates.contains(&p) {
                    predicates.push(p);
                }
            }
            SceneGraph::new("rand", 640, 480, entities, predicates)
        })
}
