//! Provider-agnostic chat completion and embedding access, output parsers
//! and the retry loop for malformed answers.
//!
//! A [`Gateway`] wraps one [`Provider`] together with an optional [`RunLog`].
//! Three providers ship with the crate:
//!
//! * [`ScriptedStub`] replays queued responses, either in order or keyed by
//!   request hash. A run log can be turned back into a script.
//! * [`EchoStub`] answers with the reference answer attached to the request
//!   by the caller, which reproduces the recommender's own ranking.
//! * [`HttpProvider`] speaks the common JSON chat-completion wire shape.

mod http;
mod parse;
mod runlog;
mod spec;
mod stub;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use http::{HttpConfig, HttpProvider};
pub use parse::{
    format_ranked_list, normalize_title, parse_free_text, parse_ranked_list, parse_rating, ParseError, ParseErrorKind, RankedEntry,
    TitleIndex, LIST_ANCHOR,
};
pub use runlog::{RunLog, RunRecord};
pub use spec::ProviderSpec;
pub use stub::{stub_embedding, EchoStub, Script, ScriptEntry, ScriptedStub, STUB_EMBEDDING_DIM};

pub const DEFAULT_MAX_RETRIES: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: usize },
    #[error("authentication failed (status {status})")]
    Auth { status: u16 },
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("stub script exhausted at request {index}")]
    ScriptExhausted { index: usize },
    #[error("stub script has no response for request {index} (hash {hash})")]
    ScriptMiss { index: usize, hash: String },
    #[error("echo stub needs a reference answer on the request")]
    NoReference,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no well-formed answer after {attempts} attempt(s); last error {last}")]
    RetriesExhausted { attempts: usize, last: ParseError, raw: Vec<String> },
    #[error("run log: {0}")]
    RunLog(String),
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// The answer the echo stub returns. Never sent over the wire.
    #[serde(skip)]
    pub reference_answer: Option<String>,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>, temperature: f64) -> Self {
        Self { model_id: model_id.into(), messages, temperature, max_output_tokens: 512, reference_answer: None }
    }

    pub fn with_reference(mut self, answer: impl Into<String>) -> Self {
        self.reference_answer = Some(answer.into());
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.last() {
            None => Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::User => Err(LlmError::InvalidRequest("last message must come from the user".into())),
            _ if !(0.0..=2.0).contains(&self.temperature) => {
                Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)))
            }
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 over model, messages and temperature.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model: &'a str,
            messages: &'a [Message],
            temperature: f64,
        }
        let key = Key { model: &self.model_id, messages: &self.messages, temperature: self.temperature };
        hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("request serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub source_text_hash: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A chat-completion and embedding backend.
pub trait Provider: Send + Sync {
    /// Label used in reports, e.g. `stub`, `echo`, `http:gpt-3.5-turbo`.
    fn id(&self) -> String;

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError>;
}

/// Parsed payload together with the number of provider calls it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempted<T> {
    pub value: T,
    pub attempts: usize,
    pub raw: Vec<String>,
}

/// A provider plus the run log every call is recorded in.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    log: Option<Arc<RunLog>>,
    pub max_retries: usize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("provider", &self.provider.id()).field("max_retries", &self.max_retries).finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        Self { provider, log: None, max_retries: DEFAULT_MAX_RETRIES }
    }

    pub fn with_log(mut self, log: Arc<RunLog>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn with_max_retries(mut self, n: usize) -> Self {
        self.max_retries = n;
        self
    }

    pub fn provider_id(&self) -> String {
        self.provider.id()
    }

    pub fn log(&self) -> Option<&Arc<RunLog>> {
        self.log.as_ref()
    }

    /// One provider call, logged without a parse outcome.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let attempted = self.complete_with_retry(request, 0, |t| Ok::<_, ParseError>(t.to_string()))?;
        Ok(attempted.value)
    }

    /// Sends `request` until `parser` accepts the answer, at most
    /// `max_retries + 1` times. Every attempt resends the identical request.
    pub fn complete_with_retry<T>(
        &self,
        request: &CompletionRequest,
        max_retries: usize,
        parser: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<Attempted<T>, LlmError> {
        request.validate()?;
        let hash = request.hash();
        let mut raw = Vec::new();
        let mut last = None;
        for attempt in 1..=max_retries + 1 {
            let started = Instant::now();
            let completion = self.provider.complete(request)?;
            let latency_ms = started.elapsed().as_millis() as u64;
            let outcome = parser(&completion.text);
            raw.push(completion.text.clone());
            if let Some(log) = &self.log {
                log.append(&RunRecord {
                    request_hash: hash.clone(),
                    provider: self.provider.id(),
                    model_id: request.model_id.clone(),
                    temperature: request.temperature,
                    messages: request.messages.clone(),
                    attempt,
                    response: completion.text.clone(),
                    parse_outcome: match &outcome {
                        Ok(_) => "ok".to_string(),
                        Err(e) => e.to_string(),
                    },
                    latency_ms,
                    prompt_tokens: completion.prompt_tokens,
                    completion_tokens: completion.completion_tokens,
                })?;
            }
            match outcome {
                Ok(value) => return Ok(Attempted { value, attempts: attempt, raw }),
                Err(e) => {
                    tracing::debug!(attempt, error = %e, "malformed answer");
                    last = Some(e);
                }
            }
        }
        Err(LlmError::RetriesExhausted { attempts: max_retries + 1, last: last.expect("at least one attempt"), raw })
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::InvalidRequest("cannot embed empty text".into()));
        }
        let v = self.provider.embed(text)?;
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(LlmError::Embedding("non-finite component".into()));
        }
        Ok(v)
    }
}

/// A gateway together with the model it addresses.
#[derive(Debug, Clone)]
pub struct Binding {
    pub gateway: Gateway,
    pub model_id: String,
}

impl Binding {
    pub fn new(gateway: Gateway, model_id: impl Into<String>) -> Self {
        Self { gateway, model_id: model_id.into() }
    }

    /// `provider/model`, as recorded in reports.
    pub fn id(&self) -> String {
        format!("{}/{}", self.gateway.provider_id(), self.model_id)
    }

    pub fn request(&self, messages: Vec<Message>, temperature: f64) -> CompletionRequest {
        CompletionRequest::new(self.model_id.clone(), messages, temperature)
    }
}
