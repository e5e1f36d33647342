//! Readers for Visual Genome JSON and the canonical `triple_jsonl` format.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{validate, BBox, Entity, EntityId, ImageId, Predicate, SceneGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestFormat {
    VgJson,
    TripleJsonl,
}

impl FromStr for IngestFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vg_json" => Ok(Self::VgJson),
            "triple_jsonl" => Ok(Self::TripleJsonl),
            other => Err(format!(
                "unknown scene-graph format `{other}` (expected vg_json or triple_jsonl)"
            )),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} is not valid {format:?} input: {message}")]
    Malformed {
        path: PathBuf,
        format: IngestFormat,
        message: String,
    },
    #[error("no valid scene graphs in input ({} records, {} rejected)", .0.records, .0.rejected.len())]
    EmptyCorpus(Box<IngestReport>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// Zero-based record index (line number - 1 for JSONL).
    pub record: usize,
    pub image_id: Option<ImageId>,
    pub reasons: Vec<String>,
}

/// Same entity id seen with two different boxes; the first one is kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Collision {
    pub image_id: ImageId,
    pub entity: EntityId,
    pub kept: BBox,
    pub ignored: BBox,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub records: usize,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
    /// Accepted graphs with no predicates.
    pub unusable: usize,
    pub duplicate_predicates: usize,
    pub collisions: Vec<Collision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub graphs: Vec<SceneGraph>,
    pub report: IngestReport,
}

/// Reads and validates scene graphs. Invalid records are dropped and listed
/// in the report; only I/O failures, an unparseable VG container and an
/// empty result are fatal.
pub fn ingest_scene_graphs(
    path: &Path,
    format: IngestFormat,
) -> Result<IngestOutcome, IngestError> {
    let candidates = match format {
        IngestFormat::TripleJsonl => read_triple_jsonl(path)?,
        IngestFormat::VgJson => read_vg(path)?,
    };

    let mut report = IngestReport {
        records: candidates.len(),
        ..Default::default()
    };
    let mut graphs = Vec::new();
    for (index, candidate) in candidates.into_iter().enumerate() {
        match candidate {
            Err((image_id, reasons)) => report.rejected.push(Rejection {
                record: index,
                image_id,
                reasons,
            }),
            Ok(raw) => {
                report.duplicate_predicates += raw.duplicates;
                report.collisions.extend(raw.collisions);
                let violations = validate(&raw.graph);
                if violations.is_valid() {
                    if !raw.graph.is_composable() {
                        report.unusable += 1;
                    }
                    graphs.push(raw.graph);
                } else {
                    report.rejected.push(Rejection {
                        record: index,
                        image_id: Some(raw.graph.image_id.clone()),
                        reasons: violations
                            .violations
                            .iter()
                            .map(|v| v.to_string())
                            .collect(),
                    });
                }
            }
        }
    }
    report.accepted = graphs.len();
    if graphs.is_empty() {
        return Err(IngestError::EmptyCorpus(Box::new(report)));
    }
    Ok(IngestOutcome { graphs, report })
}

struct RawGraph {
    graph: SceneGraph,
    duplicates: usize,
    collisions: Vec<Collision>,
}

type Candidate = Result<RawGraph, (Option<ImageId>, Vec<String>)>;

fn read_to_string(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalizes names and relations and drops repeated triples.
fn assemble(
    image_id: ImageId,
    width: u32,
    height: u32,
    entities: Vec<Entity>,
    predicates: Vec<Predicate>,
    collisions: Vec<Collision>,
) -> RawGraph {
    let entities = entities
        .into_iter()
        .map(|e| Entity {
            name: normalize_text(&e.name),
            ..e
        })
        .collect();
    let mut seen = HashSet::new();
    let mut unique = Vec::new();
    let mut duplicates = 0;
    for p in predicates {
        let p = Predicate {
            relation: normalize_text(&p.relation),
            ..p
        };
        if seen.insert(p.clone()) {
            unique.push(p);
        } else {
            duplicates += 1;
        }
    }
    RawGraph {
        graph: SceneGraph::new(image_id, width, height, entities, unique),
        duplicates,
        collisions,
    }
}

// ---- triple_jsonl -------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TripleRecord {
    image_id: ImageId,
    width: u32,
    height: u32,
    #[serde(default)]
    entities: Vec<TripleEntity>,
    #[serde(default)]
    predicates: Vec<TriplePredicate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TripleEntity {
    id: u64,
    name: String,
    bbox: [u32; 4],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TriplePredicate {
    subject: u64,
    relation: String,
    object: u64,
}

fn read_triple_jsonl(path: &Path) -> Result<Vec<Candidate>, IngestError> {
    let text = read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_triple_line)
        .collect())
}

fn parse_triple_line(line: &str) -> Candidate {
    let value: Value = serde_json::from_str(line).map_err(|e| (None, vec![e.to_string()]))?;
    let image_id = value
        .get("image_id")
        .and_then(|v| ImageId::deserialize(v.clone()).ok());
    let record: TripleRecord =
        serde_json::from_value(value).map_err(|e| (image_id.clone(), vec![e.to_string()]))?;

    let mut reasons = Vec::new();
    let mut entities = Vec::with_capacity(record.entities.len());
    for e in record.entities {
        let [x, y, w, h] = e.bbox;
        match BBox::from_xywh(x, y, w, h) {
            Ok(bbox) => entities.push(Entity {
                id: EntityId(e.id),
                name: e.name,
                bbox,
            }),
            Err(err) => reasons.push(format!("entity {}: {err}", e.id)),
        }
    }
    if !reasons.is_empty() {
        return Err((Some(record.image_id), reasons));
    }
    let predicates = record
        .predicates
        .into_iter()
        .map(|p| Predicate {
            subject: EntityId(p.subject),
            relation: p.relation,
            object: EntityId(p.object),
        })
        .collect();
    Ok(assemble(
        record.image_id,
        record.width,
        record.height,
        entities,
        predicates,
        Vec::new(),
    ))
}

// ---- Visual Genome -------------------------------------------------------

#[derive(Deserialize, Clone)]
struct VgObject {
    #[serde(alias = "id")]
    object_id: u64,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    #[serde(default)]
    names: Vec<String>,
    #[serde(default)]
    name: Option<String>,
}

impl VgObject {
    fn name(&self) -> Option<&str> {
        self.names
            .first()
            .map(String::as_str)
            .or(self.name.as_deref())
    }
}

#[derive(Deserialize)]
struct VgRelationship {
    predicate: String,
    subject: VgObject,
    object: VgObject,
}

#[derive(Deserialize)]
struct VgImage {
    #[serde(alias = "id")]
    image_id: ImageId,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct VgObjectsEntry {
    #[serde(alias = "id")]
    image_id: ImageId,
    #[serde(default)]
    objects: Vec<Value>,
}

#[derive(Deserialize)]
struct VgRelationshipsEntry {
    #[serde(alias = "id")]
    image_id: ImageId,
    #[serde(default)]
    relationships: Vec<Value>,
}

/// Merged single-file layout: one element per image carrying its own
/// objects and relationships.
#[derive(Deserialize)]
struct VgMergedEntry {
    #[serde(alias = "id")]
    image_id: ImageId,
    width: u32,
    height: u32,
    #[serde(default)]
    objects: Vec<Value>,
    #[serde(default)]
    relationships: Vec<Value>,
}

fn parse_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IngestError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IngestError::Malformed {
        path: path.to_path_buf(),
        format: IngestFormat::VgJson,
        message: e.to_string(),
    })
}

fn read_vg(path: &Path) -> Result<Vec<Candidate>, IngestError> {
    if path.is_dir() {
        read_vg_release(path)
    } else {
        let merged: Vec<Value> = parse_json_file(path)?;
        Ok(merged
            .into_iter()
            .map(|v| {
                let id = v
                    .get("image_id")
                    .or_else(|| v.get("id"))
                    .and_then(|id| ImageId::deserialize(id.clone()).ok());
                let entry: VgMergedEntry =
                    serde_json::from_value(v).map_err(|e| (id, vec![e.to_string()]))?;
                build_vg_graph(
                    entry.image_id,
                    entry.width,
                    entry.height,
                    &entry.objects,
                    &entry.relationships,
                )
            })
            .collect())
    }
}

/// Directory holding the public release files `image_data.json`,
/// `objects.json` and (optionally) `relationships.json`.
fn read_vg_release(dir: &Path) -> Result<Vec<Candidate>, IngestError> {
    let images: Vec<VgImage> = parse_json_file(&dir.join("image_data.json"))?;
    let objects_path = dir.join("objects.json");
    let objects: Vec<VgObjectsEntry> = if objects_path.exists() {
        parse_json_file(&objects_path)?
    } else {
        Vec::new()
    };
    let rel_path = dir.join("relationships.json");
    let relationships: Vec<VgRelationshipsEntry> = if rel_path.exists() {
        parse_json_file(&rel_path)?
    } else {
        Vec::new()
    };

    let mut objects_by_image: BTreeMap<ImageId, Vec<Value>> = BTreeMap::new();
    for entry in objects {
        objects_by_image
            .entry(entry.image_id)
            .or_default()
            .extend(entry.objects);
    }
    let mut rels_by_image: BTreeMap<ImageId, Vec<Value>> = BTreeMap::new();
    for entry in relationships {
        rels_by_image
            .entry(entry.image_id)
            .or_default()
            .extend(entry.relationships);
    }

    Ok(images
        .into_iter()
        .map(|img| {
            let objs = objects_by_image.remove(&img.image_id).unwrap_or_default();
            let rels = rels_by_image.remove(&img.image_id).unwrap_or_default();
            build_vg_graph(img.image_id, img.width, img.height, &objs, &rels)
        })
        .collect())
}

fn build_vg_graph(
    image_id: ImageId,
    width: u32,
    height: u32,
    objects: &[Value],
    relationships: &[Value],
) -> Candidate {
    let mut reasons = Vec::new();
    let mut entities: BTreeMap<EntityId, Entity> = BTreeMap::new();
    let mut collisions = Vec::new();

    let mut add_object = |obj: &VgObject, reasons: &mut Vec<String>| {
        let id = EntityId(obj.object_id);
        let Some(name) = obj.name() else {
            reasons.push(format!("object {id} has no name"));
            return;
        };
        let bbox = match BBox::from_xywh(obj.x, obj.y, obj.w, obj.h) {
            Ok(b) => b,
            Err(e) => {
                reasons.push(format!("object {id}: {e}"));
                return;
            }
        };
        match entities.get(&id) {
            Some(existing) if existing.bbox != bbox => collisions.push(Collision {
                image_id: image_id.clone(),
                entity: id,
                kept: existing.bbox,
                ignored: bbox,
            }),
            Some(_) => {}
            None => {
                entities.insert(
                    id,
                    Entity {
                        id,
                        name: name.to_string(),
                        bbox,
                    },
                );
            }
        }
    };

    for raw in objects {
        match VgObject::deserialize(raw) {
            Ok(obj) => add_object(&obj, &mut reasons),
            Err(e) => reasons.push(format!("object: {e}")),
        }
    }
    let mut predicates = Vec::new();
    for raw in relationships {
        match VgRelationship::deserialize(raw) {
            Ok(rel) => {
                add_object(&rel.subject, &mut reasons);
                add_object(&rel.object, &mut reasons);
                predicates.push(Predicate {
                    subject: EntityId(rel.subject.object_id),
                    relation: rel.predicate,
                    object: EntityId(rel.object.object_id),
                });
            }
            Err(e) => reasons.push(format!("relationship: {e}")),
        }
    }
    if !reasons.is_empty() {
        return Err((Some(image_id), reasons));
    }
    Ok(assemble(
        image_id,
        width,
        height,
        entities.into_values().collect(),
        predicates,
        collisions,
    ))
}
