//! Clients for the external text generator and sentence parser.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::http::{JsonClient, RetryPolicy, TransportError};
use crate::lexicon;
use crate::parse::{ParseBundle, ParseError};
use crate::scene_graph::SceneGraph;

use super::chains::PredicateChain;

/// Best-effort instruction for an instruction-following generator. Not the
/// prompt any published corpus was built with.
pub const DEFAULT_SYSTEM_PROMPT: &str = "You write one referring expression for an image. \
Combine the given <subject, relation, object> triples into a single noun phrase or sentence \
that describes the subject of the first triple. Use only the listed object names and \
relations. Do not introduce any other objects, attributes or relationships. \
Answer with the expression only.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// Body of `POST /generate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub triples: Vec<Triple>,
    pub entities: Vec<String>,
}

impl GenerationRequest {
    pub fn for_chain(graph: &SceneGraph, chain: &PredicateChain, system_prompt: &str) -> Self {
        let name = |id| lexicon::bare_name(&graph.entity(id).expect("chain in graph").name);
        Self {
            system_prompt: system_prompt.to_string(),
            triples: chain
                .predicates
                .iter()
                .map(|p| Triple {
                    subject: name(p.subject),
                    relation: p.relation.clone(),
                    object: name(p.object),
                })
                .collect(),
            entities: chain.walk().iter().map(|&id| name(id)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
}

pub trait TextGenerator: Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String, TransportError>;
}

pub struct HttpGenerator {
    client: JsonClient,
    retry: RetryPolicy,
}

impl HttpGenerator {
    pub fn new(
        base_url: &str,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, TransportError> {
        Ok(Self {
            client: JsonClient::new(base_url, timeout)?,
            retry,
        })
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<String, TransportError> {
        let (r, _) = self.retry.run(
            || {
                self.client
                    .post::<_, GenerationResponse>("/generate", request)
            },
            TransportError::is_transient,
        );
        r.map(|g| g.text)
    }
}

/// Body of `POST /parse`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseRequest {
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseResponse {
    pub tokens: Vec<String>,
    pub conllu: String,
    pub bracketed: String,
}

impl ParseResponse {
    /// Ingests both renderings and checks them against `tokens`.
    pub fn into_bundle(self) -> Result<ParseBundle, ParseError> {
        let bundle = ParseBundle::from_strings(&self.bracketed, &self.conllu)?;
        if bundle.tree.tokens() != self.tokens.as_slice() {
            return Err(ParseError::InconsistentTokens {
                constituency: bundle.tree.tokens().to_vec(),
                dependency: self.tokens,
            });
        }
        Ok(bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseServiceError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

pub trait ParseService: Sync {
    fn parse(&self, sentence: &str) -> Result<ParseBundle, ParseServiceError>;
}

pub struct HttpParser {
    client: JsonClient,
    retry: RetryPolicy,
}

impl HttpParser {
    pub fn new(
        base_url: &str,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, TransportError> {
        Ok(Self {
            client: JsonClient::new(base_url, timeout)?,
            retry,
        })
    }
}

impl ParseService for HttpParser {
    fn parse(&self, sentence: &str) -> Result<ParseBundle, ParseServiceError> {
        let body = ParseRequest {
            sentence: sentence.to_string(),
        };
        let (r, _) = self.retry.run(
            || self.client.post::<_, ParseResponse>("/parse", &body),
            TransportError::is_transient,
        );
        Ok(r?.into_bundle()?)
    }
}
