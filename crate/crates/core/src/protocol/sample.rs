use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::composer::{Expression, NestedInstance};

use super::sequence::{clue_clause, sequence_head};
use super::{
    encode_bbox, ClueItem, GridSpec, LocPair, ProtocolError, PHRASE_CLOSE, PHRASE_OPEN, SEQ_CLOSE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskConfig {
    /// Mask `<b>` and `</b>` along with the two location tokens.
    pub include_delimiters: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            include_delimiters: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSample {
    pub sequence: String,
    /// Markers are single tokens; text splits on whitespace.
    pub tokens: Vec<String>,
    pub loss_mask: Vec<bool>,
    /// Byte ranges of the masked responses, one per level-i expression.
    pub mask_spans: Vec<Range<usize>>,
}

/// The `{sequence, mask_spans}` JSONL record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub sequence: String,
    pub mask_spans: Vec<[usize; 2]>,
}

impl From<&TrainingSample> for TrainingRecord {
    fn from(s: &TrainingSample) -> Self {
        Self {
            sequence: s.sequence.clone(),
            mask_spans: s.mask_spans.iter().map(|r| [r.start, r.end]).collect(),
        }
    }
}

fn is_marker(tag: &str) -> bool {
    matches!(
        tag,
        "s" | "/s" | "img" | "/img" | "grounding" | "p" | "/p" | "b" | "/b"
    ) || tag
        .strip_prefix("loc_")
        .is_some_and(|k| !k.is_empty() && k.bytes().all(|c| c.is_ascii_digit()))
}

/// Token byte ranges of a rendered sequence.
pub(crate) fn tokenize(seq: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut word: Option<usize> = None;
    let bytes = seq.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some(gt) = seq[i..].find('>') {
                if is_marker(&seq[i + 1..i + gt]) {
                    if let Some(w) = word.take() {
                        out.push(w..i);
                    }
                    out.push(i..i + gt + 1);
                    i += gt + 1;
                    continue;
                }
            }
        }
        let c = seq[i..].chars().next().unwrap();
        if c.is_whitespace() {
            if let Some(w) = word.take() {
                out.push(w..i);
            }
        } else if word.is_none() {
            word = Some(i);
        }
        i += c.len_utf8();
    }
    if let Some(w) = word {
        out.push(w..seq.len());
    }
    out
}

fn grounded(e: &Expression, pair: &LocPair) -> String {
    format!("{PHRASE_OPEN}{}{PHRASE_CLOSE}{}", e.text, pair.render())
}

/// Training sequence for the level-`level` expressions of `instance`.
///
/// Level 1 lists the level-one expressions with their boxes. Above level
/// one, the level-(i−1) parents of the level-i expressions are given as the
/// clue and the level-i expressions are the response.
pub fn render_training_sample(
    instance: &NestedInstance,
    level: u32,
    grid: GridSpec,
    mask: MaskConfig,
) -> Result<TrainingSample, ProtocolError> {
    if level == 0 || level > instance.max_level {
        return Err(ProtocolError::LevelOutOfRange {
            level,
            max: instance.max_level,
        });
    }
    let (w, h) = (instance.width, instance.height);
    let targets: Vec<&Expression> = instance.at_level(level).collect();
    let mut sequence = sequence_head(&instance.image_id.0);
    if level > 1 {
        let mut clue_ids: Vec<usize> = targets
            .iter()
            .flat_map(|t| t.parents.iter().copied())
            .filter(|&p| {
                instance
                    .expressions
                    .get(p)
                    .is_some_and(|e| e.level == level - 1)
            })
            .collect();
        clue_ids.sort_unstable();
        clue_ids.dedup();
        if clue_ids.is_empty() {
            return Err(ProtocolError::IncompleteInstance(level));
        }
        let first_seen = |i: usize| {
            let text = &instance.expressions[i].text;
            targets
                .iter()
                .filter_map(|t| t.text.find(text.as_str()))
                .min()
                .unwrap_or(usize::MAX)
        };
        clue_ids.sort_by_key(|&i| (first_seen(i), i));
        let clues = clue_ids
            .iter()
            .map(|&i| {
                let e = &instance.expressions[i];
                Ok(ClueItem {
                    text: e.text.clone(),
                    loc: encode_bbox(&e.bbox, w, h, grid)?,
                })
            })
            .collect::<Result<Vec<_>, ProtocolError>>()?;
        sequence.push_str(&clue_clause(&clues));
    }
    let mut mask_spans = Vec::new();
    for (k, t) in targets.iter().enumerate() {
        if k > 0 {
            sequence.push_str(", ");
        }
        let pair = encode_bbox(&t.bbox, w, h, grid)?;
        let item = grounded(t, &pair);
        let y_start = sequence.len() + PHRASE_OPEN.len() + t.text.len() + PHRASE_CLOSE.len();
        let y_end = sequence.len() + item.len();
        mask_spans.push(if mask.include_delimiters {
            y_start..y_end
        } else {
            y_start + 3..y_end - 4
        });
        sequence.push_str(&item);
    }
    sequence.push_str(SEQ_CLOSE);
    let ranges = tokenize(&sequence);
    let tokens = ranges
        .iter()
        .map(|r| sequence[r.clone()].to_string())
        .collect();
    let loss_mask = ranges
        .iter()
        .map(|r| {
            mask_spans
                .iter()
                .any(|m| m.start <= r.start && r.end <= m.end)
        })
        .collect();
    Ok(TrainingSample {
        sequence,
        tokens,
        loss_mask,
        mask_spans,
    })
}

/// Samples for every level of an instance, lowest first.
pub fn training_samples(
    instance: &NestedInstance,
    grid: GridSpec,
    mask: MaskConfig,
) -> Result<Vec<TrainingSample>, ProtocolError> {
    (1..=instance.max_level)
        .map(|l| render_training_sample(instance, l, grid, mask))
        .collect()
}
