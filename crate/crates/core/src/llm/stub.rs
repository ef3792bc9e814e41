use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{text_hash, Completion, CompletionRequest, EmbeddingVector, LlmError, Provider, RunLog};

pub const STUB_EMBEDDING_DIM: usize = 64;

/// Deterministic unit vector derived from the SHA-256 of `text`.
pub fn stub_embedding(text: &str) -> EmbeddingVector {
    let digest = Sha256::digest(text.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let raw: Vec<f64> = (0..STUB_EMBEDDING_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    EmbeddingVector { values: raw.iter().map(|x| (x / norm) as f32).collect(), source_text_hash: text_hash(text) }
}

/// One scripted answer. With a `request_hash` it only answers that request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_hash: Option<String>,
    pub response: String,
}

/// Queued responses for [`ScriptedStub`].
///
/// Script files hold one JSON object per line with a `response` field and an
/// optional `request_hash`. Run-log files have the same two fields, so a
/// recorded session can be replayed as is.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn sequential(responses: impl IntoIterator<Item = String>) -> Self {
        Self { entries: responses.into_iter().map(|response| ScriptEntry { request_hash: None, response }).collect() }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ScriptEntry = serde_json::from_str(line).map_err(|e| LlmError::RunLog(format!("script line {}: {e}", n + 1)))?;
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::RunLog(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    /// Every answer recorded in a run log, keyed by its request hash.
    pub fn from_run_log(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let records = RunLog::read(path)?;
        Ok(Self {
            entries: records.into_iter().map(|r| ScriptEntry { request_hash: Some(r.request_hash), response: r.response }).collect(),
        })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes") + "\n").collect()
    }
}

#[derive(Debug, Default)]
struct Queues {
    keyed: BTreeMap<String, VecDeque<String>>,
    sequential: VecDeque<String>,
    served: usize,
}

/// Replays a [`Script`]. Keyed entries are used for requests with a matching
/// hash, in recorded order; other requests take the next unkeyed entry.
#[derive(Debug)]
pub struct ScriptedStub {
    queues: Mutex<Queues>,
}

impl ScriptedStub {
    pub fn new(script: Script) -> Self {
        let mut q = Queues::default();
        for e in script.entries {
            match e.request_hash {
                Some(h) => q.keyed.entry(h).or_default().push_back(e.response),
                None => q.sequential.push_back(e.response),
            }
        }
        Self { queues: Mutex::new(q) }
    }

    /// Responses not yet served.
    pub fn remaining(&self) -> usize {
        let q = self.queues.lock().expect("stub lock");
        q.sequential.len() + q.keyed.values().map(VecDeque::len).sum::<usize>()
    }
}

impl Provider for ScriptedStub {
    fn id(&self) -> String {
        "stub".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let mut q = self.queues.lock().expect("stub lock");
        let index = q.served;
        q.served += 1;
        let hash = request.hash();
        if let Some(text) = q.keyed.get_mut(&hash).and_then(VecDeque::pop_front) {
            return Ok(Completion::text(text));
        }
        match q.sequential.pop_front() {
            Some(text) => Ok(Completion::text(text)),
            None if q.keyed.is_empty() => Err(LlmError::ScriptExhausted { index }),
            None => Err(LlmError::ScriptMiss { index, hash }),
        }
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        Ok(stub_embedding(text))
    }
}

/// Answers every request with its reference answer.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoStub;

impl Provider for EchoStub {
    fn id(&self) -> String {
        "echo".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        request.reference_answer.clone().map(Completion::text).ok_or(LlmError::NoReference)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        Ok(stub_embedding(text))
    }
}
