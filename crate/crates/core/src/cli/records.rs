//! File records passed between subcommands.

use serde::{Deserialize, Serialize};

use crate::composer::NestedInstance;
use crate::decomposer::DecompositionResult;
use crate::parse::{write_bracketed, write_conllu, ParseBundle, ParseError};
use crate::progressive::GroundItem;
use crate::scene_graph::BBox;

/// One expression to decompose, ground and score. Also valid `eval` input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub expression: String,
    #[serde(default)]
    pub level: u32,
    pub gold: BBox,
    pub image: String,
    pub width: u32,
    pub height: u32,
    /// Inline parses, used before any parse file or service.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracketed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conllu: Option<String>,
}

impl QueryRecord {
    /// One query per target expression, numbered per image.
    pub fn from_corpus(corpus: &[NestedInstance]) -> Vec<Self> {
        let mut out = Vec::new();
        let mut counter: std::collections::BTreeMap<&str, usize> = Default::default();
        for inst in corpus {
            for t in inst.targets() {
                let n = counter.entry(&inst.image_id.0).or_default();
                out.push(Self {
                    id: format!("{}#{n}", inst.image_id),
                    expression: t.text.clone(),
                    level: t.level,
                    gold: t.bbox,
                    image: inst.image_id.0.clone(),
                    width: inst.width,
                    height: inst.height,
                    bracketed: None,
                    conllu: None,
                });
                *n += 1;
            }
        }
        out
    }
}

/// Golden parses of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseRecord {
    pub text: String,
    pub bracketed: String,
    pub conllu: String,
}

impl ParseRecord {
    pub fn from_bundle(b: &ParseBundle) -> Self {
        Self {
            text: b.text.clone(),
            bracketed: write_bracketed(&b.tree),
            conllu: write_conllu(&b.dep),
        }
    }

    pub fn bundle(&self) -> Result<ParseBundle, ParseError> {
        ParseBundle::from_strings(&self.bracketed, &self.conllu)
    }
}

/// `decompose` output line: a decomposition or the reason there is none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecomposedRecord {
    pub id: String,
    pub image: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DecomposedRecord {
    pub fn into_item(self) -> Result<GroundItem, (String, String, String)> {
        match self.decomposition {
            Some(d) => Ok(GroundItem {
                id: self.id,
                image: self.image,
                width: self.width,
                height: self.height,
                decomposition: d,
            }),
            None => Err((
                self.id,
                self.image,
                self.error.unwrap_or_else(|| "no decomposition".into()),
            )),
        }
    }
}
