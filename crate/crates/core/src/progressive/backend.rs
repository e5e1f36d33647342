//! Model backends: the HTTP client and a scripted stand-in.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::http::JsonClient;

pub use crate::http::TransportError as BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            seed: 0,
        }
    }
}

/// Body of `POST /model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub image: String,
    pub prompt: String,
    pub max_length: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

/// Shortest output that fits `<b><loc_a><loc_b></b>`.
pub const MIN_MAX_LENGTH: u32 = 4;

impl BackendRequest {
    pub fn new(image: &str, prompt: String, max_length: u32, params: DecodingParams) -> Self {
        Self {
            image: image.to_string(),
            prompt,
            max_length: max_length.max(MIN_MAX_LENGTH),
            temperature: params.temperature,
            top_p: params.top_p,
            seed: params.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
}

/// Body of `GET /health`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    #[serde(default)]
    pub model: String,
}

pub trait ModelBackend: Sync {
    /// Raw generated text for one prompt.
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError>;
}

pub struct HttpBackend {
    client: JsonClient,
}

impl HttpBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, BackendError> {
        Ok(Self {
            client: JsonClient::new(base_url, timeout)?,
        })
    }

    pub fn health(&self) -> Result<HealthResponse, BackendError> {
        self.client.get("/health")
    }

    pub fn base_url(&self) -> &str {
        self.client.base_url()
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        self.client
            .post::<_, BackendResponse>("/model", request)
            .map(|r| r.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    Timeout,
    Unavailable,
    Rejected,
}

impl Fault {
    fn error(&self) -> BackendError {
        match self {
            Fault::Timeout => BackendError::Timeout,
            Fault::Unavailable => BackendError::Unavailable("scripted fault".into()),
            Fault::Rejected => BackendError::Rejected {
                status: 400,
                body: "scripted fault".into(),
            },
        }
    }
}

/// One scripted behavior, chosen when `matches` occurs in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matches: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
    /// Fail this many times before answering.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fail_first: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub rules: Vec<ScriptRule>,
    /// Answer when no rule matches; unmatched prompts get empty text otherwise.
    #[serde(default)]
    pub default: Option<String>,
    /// Artificial latency per call, in milliseconds.
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub seq: usize,
    pub prompt: String,
    pub at: Instant,
}

/// Deterministic backend answering by the longest rule key contained in
/// the prompt. Records every call and the peak number of concurrent calls.
pub struct ScriptedBackend {
    script: Script,
    hits: Vec<AtomicUsize>,
    calls: Mutex<Vec<CallRecord>>,
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        Self {
            hits: script.rules.iter().map(|_| AtomicUsize::new(0)).collect(),
            script,
            calls: Mutex::new(Vec::new()),
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn from_rules<S: Into<String>>(rules: impl IntoIterator<Item = (S, S)>) -> Self {
        Self::new(Script {
            rules: rules
                .into_iter()
                .map(|(m, r)| ScriptRule {
                    matches: m.into(),
                    response: Some(r.into()),
                    fault: None,
                    fail_first: 0,
                })
                .collect(),
            ..Default::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let script: Script =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Self::new(script))
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().unwrap().clone()
    }

    pub fn peak_concurrency(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn rule_for(&self, prompt: &str) -> Option<usize> {
        self.script
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| prompt.contains(&r.matches))
            .max_by(|(i, a), (j, b)| a.matches.len().cmp(&b.matches.len()).then(j.cmp(i)))
            .map(|(i, _)| i)
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        {
            let mut calls = self.calls.lock().unwrap();
            let seq = calls.len();
            calls.push(CallRecord {
                seq,
                prompt: request.prompt.clone(),
                at: Instant::now(),
            });
        }
        if self.script.latency_ms > 0 {
            thread::sleep(Duration::from_millis(self.script.latency_ms));
        }
        let result = match self.rule_for(&request.prompt) {
            Some(i) => {
                let rule = &self.script.rules[i];
                let n = self.hits[i].fetch_add(1, Ordering::SeqCst);
                let fault = rule.fault.clone().unwrap_or(Fault::Timeout);
                match &rule.response {
                    _ if n < rule.fail_first => Err(fault.error()),
                    Some(r) => Ok(r.clone()),
                    None if rule.fault.is_some() => Err(fault.error()),
                    None => Ok(String::new()),
                }
            }
            None => Ok(self.script.default.clone().unwrap_or_default()),
        };
        self.live.fetch_sub(1, Ordering::SeqCst);
        result
    }
}
