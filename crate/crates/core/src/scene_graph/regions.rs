//! Visual Genome region descriptions (`region_descriptions.json`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::ingest::normalize_text;
use super::ingest::IngestError;
use super::{BBox, ImageId};
use crate::scene_graph::IngestFormat;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionDescription {
    pub image_id: ImageId,
    pub phrase: String,
    pub bbox: BBox,
}

#[derive(Deserialize)]
struct RegionEntry {
    #[serde(alias = "image_id")]
    id: ImageId,
    #[serde(default)]
    regions: Vec<RawRegion>,
}

#[derive(Deserialize)]
struct RawRegion {
    phrase: String,
    x: u32,
    y: u32,
    width: u32,
    height: u32,
}

/// Loads region descriptions grouped by image. Regions with degenerate boxes
/// or empty phrases are skipped.
pub fn load_region_descriptions(
    path: &Path,
) -> Result<BTreeMap<ImageId, Vec<RegionDescription>>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let entries: Vec<RegionEntry> =
        serde_json::from_str(&text).map_err(|e| IngestError::Malformed {
            path: path.to_path_buf(),
            format: IngestFormat::VgJson,
            message: e.to_string(),
        })?;
    let mut out: BTreeMap<ImageId, Vec<RegionDescription>> = BTreeMap::new();
    for entry in entries {
        for r in entry.regions {
            let phrase = normalize_text(r.phrase.trim_end_matches('.'));
            let Ok(bbox) = BBox::from_xywh(r.x, r.y, r.width, r.height) else {
                continue;
            };
            if phrase.is_empty() {
                continue;
            }
            out.entry(entry.id.clone())
                .or_default()
                .push(RegionDescription {
                    image_id: entry.id.clone(),
                    phrase,
                    bbox,
                });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_are_grouped_and_normalized() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(
            f.path(),
            r#"[{"id":1,"regions":[{"region_id":1,"image_id":1,"phrase":"The woman  riding a horse.","x":1,"y":1,"width":10,"height":10},{"region_id":2,"image_id":1,"phrase":"flat","x":1,"y":1,"width":0,"height":10}]}]"#,
        )
        .unwrap();
        let regions = load_region_descriptions(f.path()).unwrap();
        let r = &regions[&ImageId("1".into())];
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].phrase, "the woman riding a horse");
    }
}
