//! Scene-graph data model: images with named, boxed entities and
//! `<subject, relation, object>` predicates between them.

mod ingest;
mod regions;

pub use ingest::{
    ingest_scene_graphs, Collision, IngestError, IngestFormat, IngestOutcome, IngestReport,
    Rejection,
};
pub use regions::{load_region_descriptions, RegionDescription};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Axis-aligned box in integer pixels, `xyxy` order, origin top-left.
///
/// `x_max`/`y_max` are exclusive edges, so a box covering a whole
/// `w × h` image is `(0, 0, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("degenerate box [{0}, {1}, {2}, {3}]: need x_min < x_max and y_min < y_max")]
pub struct DegenerateBox(pub u32, pub u32, pub u32, pub u32);

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, DegenerateBox> {
        if x_min < x_max && y_min < y_max {
            Ok(Self {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            Err(DegenerateBox(x_min, y_min, x_max, y_max))
        }
    }

    /// Builds a box from Visual-Genome style `x, y, w, h`.
    pub fn from_xywh(x: u32, y: u32, w: u32, h: u32) -> Result<Self, DegenerateBox> {
        Self::new(x, y, x.saturating_add(w), y.saturating_add(h))
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_max <= width && self.y_max <= height
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    /// Overlap area with `other` (0 when disjoint or only touching).
    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let x0 = self.x_min.max(other.x_min);
        let y0 = self.y_min.max(other.y_min);
        let x1 = self.x_max.min(other.x_max);
        let y1 = self.y_max.min(other.y_max);
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            u64::from(x1 - x0) * u64::from(y1 - y0)
        }
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}, {}, {}]",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [a, b, c, d] = <[u32; 4]>::deserialize(deserializer)?;
        BBox::new(a, b, c, d).map_err(serde::de::Error::custom)
    }
}

/// Entity identifier, unique within one [`SceneGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Image identifier. Visual Genome uses integers, VSR uses file names;
/// both are accepted and kept as text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct ImageId(pub String);

impl<'de> Deserialize<'de> for ImageId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        Ok(match Raw::deserialize(deserializer)? {
            Raw::Num(n) => ImageId(n.to_string()),
            Raw::Text(s) => ImageId(s),
        })
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ImageId {
    fn from(s: &str) -> Self {
        ImageId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Predicate {
    pub subject: EntityId,
    pub relation: String,
    pub object: EntityId,
}

impl Predicate {
    pub fn new(subject: u64, relation: &str, object: u64) -> Self {
        Self {
            subject: EntityId(subject),
            relation: relation.to_string(),
            object: EntityId(object),
        }
    }

    pub fn touches(&self, id: EntityId) -> bool {
        self.subject == id || self.object == id
    }

    /// The endpoint opposite `id`, if `id` is an endpoint.
    pub fn other_end(&self, id: EntityId) -> Option<EntityId> {
        if self.subject == id {
            Some(self.object)
        } else if self.object == id {
            Some(self.subject)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub image_id: ImageId,
    pub width: u32,
    pub height: u32,
    /// Sorted by id.
    entities: Vec<Entity>,
    predicates: Vec<Predicate>,
}

impl SceneGraph {
    /// Builds a graph; entities are sorted by id. No invariant checking
    /// happens here, see [`validate`].
    pub fn new(
        image_id: impl Into<ImageId>,
        width: u32,
        height: u32,
        mut entities: Vec<Entity>,
        predicates: Vec<Predicate>,
    ) -> Self {
        entities.sort_by_key(|e| e.id);
        Self {
            image_id: image_id.into(),
            width,
            height,
            entities,
            predicates,
        }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entities[i])
    }

    /// A graph without predicates cannot seed any relational expression.
    pub fn is_composable(&self) -> bool {
        !self.predicates.is_empty()
    }
}

impl From<String> for ImageId {
    fn from(s: String) -> Self {
        ImageId(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateEntityId { entity: EntityId },
    EmptyName { entity: EntityId },
    OutOfBounds { entity: EntityId, bbox: BBox },
    DanglingReference { predicate: usize, missing: EntityId },
    SelfRelation { predicate: usize, entity: EntityId },
    EmptyRelation { predicate: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateEntityId { entity } => write!(f, "duplicate entity id {entity}"),
            Violation::EmptyName { entity } => write!(f, "entity {entity} has an empty name"),
            Violation::OutOfBounds { entity, bbox } => {
                write!(f, "entity {entity} box {bbox} exceeds the image")
            }
            Violation::DanglingReference { predicate, missing } => {
                write!(
                    f,
                    "predicate #{predicate} references missing entity {missing}"
                )
            }
            Violation::SelfRelation { predicate, entity } => {
                write!(
                    f,
                    "predicate #{predicate} relates entity {entity} to itself"
                )
            }
            Violation::EmptyRelation { predicate } => {
                write!(f, "predicate #{predicate} has an empty relation")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every invariant violation of `graph`.
pub fn validate(graph: &SceneGraph) -> ValidationReport {
    let mut violations = Vec::new();
    let mut ids = BTreeSet::new();
    for e in &graph.entities {
        if !ids.insert(e.id) {
            violations.push(Violation::DuplicateEntityId { entity: e.id });
        }
        if e.name.trim().is_empty() {
            violations.push(Violation::EmptyName { entity: e.id });
        }
        if !e.bbox.fits_within(graph.width, graph.height) {
            violations.push(Violation::OutOfBounds {
                entity: e.id,
                bbox: e.bbox,
            });
        }
    }
    for (i, p) in graph.predicates.iter().enumerate() {
        for end in [p.subject, p.object] {
            if !ids.contains(&end) {
                violations.push(Violation::DanglingReference {
                    predicate: i,
                    missing: end,
                });
            }
        }
        if p.subject == p.object {
            violations.push(Violation::SelfRelation {
                predicate: i,
                entity: p.subject,
            });
        }
        if p.relation.trim().is_empty() {
            violations.push(Violation::EmptyRelation { predicate: i });
        }
    }
    ValidationReport { violations }
}

/// Entities keyed by id, for callers doing many lookups.
pub fn entity_index(graph: &SceneGraph) -> BTreeMap<EntityId, &Entity> {
    graph.entities.iter().map(|e| (e.id, e)).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn entity(id: u64, name: &str, b: [u32; 4]) -> Entity {
        Entity {
            id: EntityId(id),
            name: name.to_string(),
            bbox: BBox::new(b[0], b[1], b[2], b[3]).unwrap(),
        }
    }

    pub(crate) fn rider_graph() -> SceneGraph {
        SceneGraph::new(
            "rider",
            640,
            480,
            vec![
                entity(1, "woman", [200, 80, 340, 400]),
                entity(2, "horse", [150, 200, 480, 470]),
                entity(3, "man", [20, 60, 160, 420]),
            ],
            vec![
                Predicate::new(1, "riding", 2),
                Predicate::new(3, "behind", 1),
            ],
        )
    }

    #[test]
    fn valid_graph_has_empty_report() {
        assert!(validate(&rider_graph()).is_valid());
    }

    #[test]
    fn dangling_reference_names_the_missing_id() {
        let mut g = rider_graph();
        g.predicates.push(Predicate::new(3, "near", 42));
        let report = validate(&g);
        assert_eq!(
            report.violations,
            vec![Violation::DanglingReference {
                predicate: 2,
                missing: EntityId(42)
            }]
        );
    }

    #[test]
    fn box_past_image_width_is_out_of_bounds() {
        let mut g = rider_graph();
        g.entities[0].bbox = BBox::new(600, 0, 641, 10).unwrap();
        let report = validate(&g);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::OutOfBounds {
                entity: EntityId(1),
                ..
            }
        ));
    }

    #[test]
    fn degenerate_boxes_are_unrepresentable() {
        assert!(BBox::new(5, 5, 5, 9).is_err());
        assert!(BBox::from_xywh(5, 5, 0, 3).is_err());
        assert_eq!(
            BBox::from_xywh(1, 2, 3, 4).unwrap(),
            BBox::new(1, 2, 4, 6).unwrap()
        );
    }

    #[test]
    fn bbox_serializes_as_xyxy_array() {
        let b = BBox::new(1, 2, 3, 4).unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,2,3,4]");
        assert!(serde_json::from_str::<BBox>("[3,2,3,4]").is_err());
    }

    #[test]
    fn image_id_accepts_numbers_and_strings() {
        let a: ImageId = serde_json::from_str("17").unwrap();
        let b: ImageId = serde_json::from_str("\"17\"").unwrap();
        assert_eq!(a, b);
    }
}
