//! Level-by-level grounding. Each level's prompt carries the boxes found
//! for the sub-expressions one level down, so the model only has to resolve
//! one relation at a time.

mod backend;

pub use backend::{
    BackendError, BackendRequest, BackendResponse, CallRecord, DecodingParams, Fault,
    HealthResponse, HttpBackend, ModelBackend, Script, ScriptRule, ScriptedBackend, MIN_MAX_LENGTH,
};

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decomposer::{DecompositionResult, LeveledSpan};
use crate::http::RetryPolicy;
use crate::pool;
use crate::protocol::{
    decode_loc, parse_response, render_level_prompt, ClueItem, GridSpec, GroundedSpan, LocPair,
};
use crate::scene_graph::BBox;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClueMode {
    /// Clues from the nearest lower level only.
    #[default]
    PreviousLevel,
    /// Clues from every lower level.
    AllLower,
}

impl std::str::FromStr for ClueMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "previous-level" | "previous" => Ok(Self::PreviousLevel),
            "all-lower" | "all" => Ok(Self::AllLower),
            _ => Err(format!("unknown clue mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundConfig {
    pub grid: GridSpec,
    pub max_length: u32,
    pub decoding: DecodingParams,
    pub retry: RetryPolicy,
    pub clue_mode: ClueMode,
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            max_length: 64,
            decoding: DecodingParams::default(),
            retry: RetryPolicy::default(),
            clue_mode: ClueMode::default(),
        }
    }
}

/// One expression to ground in one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundItem {
    pub id: String,
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub decomposition: DecompositionResult,
}

/// Result for one expression of a level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressionResult {
    pub expression: String,
    pub loc: Option<LocPair>,
}

/// One backend call: all expressions of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: u32,
    pub prompt: String,
    /// Raw text of the successful call, if any.
    pub response: Option<String>,
    pub parsed: Vec<GroundedSpan>,
    pub results: Vec<ExpressionResult>,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundStatus {
    Ok,
    /// The top level was grounded but some lower expression was not.
    Degraded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingOutcome {
    pub id: String,
    pub image: String,
    pub status: GroundStatus,
    pub bbox: Option<BBox>,
    pub loc: Option<LocPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub traces: Vec<LevelTrace>,
}

/// A trace line with timing, for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    #[serde(flatten)]
    pub trace: LevelTrace,
    pub wall_ms: f64,
}

impl GroundingOutcome {
    /// Backend calls made, retries included.
    pub fn calls(&self) -> u32 {
        self.traces.iter().map(|t| t.attempts).sum()
    }

    pub fn trace_records(&self) -> Vec<TraceRecord> {
        self.traces
            .iter()
            .map(|t| TraceRecord {
                id: self.id.clone(),
                trace: t.clone(),
                wall_ms: t.wall_ms,
            })
            .collect()
    }
}

/// Clues for the expressions `targets`: lower-level spans nested inside
/// one of them that were grounded, in span order. In previous-level mode
/// each target only looks at its nearest lower level that has nested spans,
/// grounded or not.
fn clues_for(
    spans: &[LeveledSpan],
    found: &[Option<LocPair>],
    targets: &[usize],
    mode: ClueMode,
) -> Vec<ClueItem> {
    let mut picked = BTreeSet::new();
    for &t in targets {
        let me = &spans[t];
        let nested: Vec<usize> = (0..spans.len())
            .filter(|&j| {
                let s = &spans[j];
                s.level < me.level && me.start <= s.start && s.end <= me.end
            })
            .collect();
        let nearest = nested.iter().map(|&j| spans[j].level).max();
        picked.extend(
            nested
                .into_iter()
                .filter(|&j| mode == ClueMode::AllLower || Some(spans[j].level) == nearest)
                .map(|j| (spans[j].start, spans[j].end, j)),
        );
    }
    picked
        .into_iter()
        .filter_map(|(_, _, j)| {
            found[j].map(|loc| ClueItem {
                text: spans[j].text.clone(),
                loc,
            })
        })
        .collect()
}

fn same_phrase(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// Matches response spans to targets: first by phrase text, then the
/// remaining boxed spans in order of appearance.
fn assign(parsed: &[GroundedSpan], targets: &[&str]) -> Vec<Option<LocPair>> {
    let mut out = vec![None; targets.len()];
    let mut used = vec![false; parsed.len()];
    for (k, t) in targets.iter().enumerate() {
        if let Some(i) = (0..parsed.len())
            .find(|&i| !used[i] && parsed[i].loc.is_some() && same_phrase(&parsed[i].text, t))
        {
            used[i] = true;
            out[k] = parsed[i].loc;
        }
    }
    for slot in out.iter_mut().filter(|s| s.is_none()) {
        let free = (0..parsed.len()).find(|&i| {
            !used[i]
                && parsed[i].loc.is_some()
                && !targets.iter().any(|t| same_phrase(&parsed[i].text, t))
        });
        if let Some(i) = free {
            used[i] = true;
            *slot = parsed[i].loc;
        }
    }
    out
}

/// Grounds the decomposition one level at a time, lowest first, with a
/// single backend call per level; expressions within a level go left to
/// right. The last span is the full expression and gives the final box.
pub fn ground(
    item: &GroundItem,
    backend: &dyn ModelBackend,
    config: &GroundConfig,
) -> GroundingOutcome {
    let spans = &item.decomposition.spans;
    let mut found: Vec<Option<LocPair>> = vec![None; spans.len()];
    let mut traces = Vec::new();
    for level in item.decomposition.levels() {
        let mut members: Vec<usize> = (0..spans.len())
            .filter(|&i| spans[i].level == level)
            .collect();
        members.sort_by_key(|&i| (spans[i].start, spans[i].end, i));
        let texts: Vec<&str> = members.iter().map(|&i| spans[i].text.as_str()).collect();
        let clues = clues_for(spans, &found, &members, config.clue_mode);
        let prompt = render_level_prompt(&item.image, &clues, &texts);
        let request = BackendRequest::new(
            &item.image,
            prompt.clone(),
            config.max_length,
            config.decoding,
        );
        let started = Instant::now();
        let (result, attempts) = config
            .retry
            .run(|| backend.complete(&request), BackendError::is_transient);
        let wall_ms = started.elapsed().as_secs_f64() * 1000.0;
        let mut trace = LevelTrace {
            level,
            prompt,
            response: None,
            parsed: Vec::new(),
            results: Vec::new(),
            attempts,
            error: None,
            wall_ms,
        };
        let locs = match result {
            Ok(text) => {
                let parsed = parse_response(&text, config.grid);
                let locs = assign(&parsed.spans, &texts);
                if locs.iter().any(Option::is_none) {
                    trace.error = Some("response lacks a location pair for some expression".into());
                }
                trace.parsed = parsed.spans;
                trace.response = Some(text);
                locs
            }
            Err(e) => {
                trace.error = Some(e.to_string());
                vec![None; members.len()]
            }
        };
        for (&i, loc) in members.iter().zip(&locs) {
            found[i] = *loc;
            trace.results.push(ExpressionResult {
                expression: spans[i].text.clone(),
                loc: *loc,
            });
        }
        log::debug!("{} level {level}: {:?}", item.id, locs);
        traces.push(trace);
    }
    let mut outcome = GroundingOutcome {
        id: item.id.clone(),
        image: item.image.clone(),
        status: GroundStatus::Failed,
        bbox: None,
        loc: None,
        error: None,
        traces,
    };
    let Some(top) = spans.len().checked_sub(1) else {
        outcome.error = Some("empty decomposition".into());
        return outcome;
    };
    outcome.loc = found[top];
    match found[top] {
        None => {
            let why = outcome
                .traces
                .iter()
                .find(|t| t.level == spans[top].level)
                .and_then(|t| t.error.clone())
                .unwrap_or_default();
            outcome.error = Some(format!("top level not grounded: {why}"));
        }
        Some(pair) => match decode_loc(&pair, item.width, item.height, config.grid) {
            Ok(b) => {
                outcome.bbox = Some(b);
                outcome.status = if found.iter().all(Option::is_some) {
                    GroundStatus::Ok
                } else {
                    GroundStatus::Degraded
                };
            }
            Err(e) => outcome.error = Some(e.to_string()),
        },
    }
    outcome
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BatchSummary {
    pub items: usize,
    pub ok: usize,
    pub degraded: usize,
    pub failed: usize,
    pub calls: u64,
}

/// Grounds items concurrently, at most `concurrency` at a time. Outcomes
/// keep input order; one item's failure does not affect the others.
pub fn ground_batch(
    items: &[GroundItem],
    backend: &dyn ModelBackend,
    config: &GroundConfig,
    concurrency: usize,
) -> (Vec<GroundingOutcome>, BatchSummary) {
    let done = AtomicUsize::new(0);
    let total = items.len();
    let outcomes = pool::ordered_map(items, concurrency, |_, item| {
        let o = ground(item, backend, config);
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if n.is_multiple_of(100) || n == total {
            log::info!("grounded {n}/{total}");
        }
        o
    });
    let mut summary = BatchSummary {
        items: total,
        ..Default::default()
    };
    for o in &outcomes {
        match o.status {
            GroundStatus::Ok => summary.ok += 1,
            GroundStatus::Degraded => summary.degraded += 1,
            GroundStatus::Failed => summary.failed += 1,
        }
        summary.calls += u64::from(o.calls());
    }
    (outcomes, summary)
}
