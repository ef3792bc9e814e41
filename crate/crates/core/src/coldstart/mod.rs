//! New-item recommendations from external descriptions.
//!
//! Documents about items the rating data has never seen are embedded once
//! and cached. A request is embedded the same way and compared with every
//! cached vector by cosine similarity (a flat scan). The best matches are
//! written into a prompt that only lets the model choose among them.

mod cache;

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::UserProfile;
use crate::llm::{text_hash, Gateway, LlmError, TitleIndex};
use crate::prompt::{ExpectedFormat, Fields, InteractionSummary, PromptBundle, PromptError, PromptForge, Variant, FLAG_EMPTY_HISTORY};

pub use cache::{CacheEntry, EmbeddingCache, CACHE_FORMAT_VERSION};

pub const DEFAULT_RETRIEVAL_K: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ColdstartError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}: {msg}")]
    InvalidDoc { line: usize, msg: String },
    #[error("cache format: {0}")]
    Format(String),
    #[error("embedding cache is empty")]
    EmptyCache,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("vector has dimension {got}, cache holds dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// A description of an item outside the rating data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalItemDoc {
    pub doc_id: String,
    pub title: String,
    #[serde(default)]
    pub release_year: Option<i32>,
    pub description: String,
    #[serde(default)]
    pub source_tag: String,
}

impl ExternalItemDoc {
    /// `Title (Year)`, or the bare title when the year is unknown.
    pub fn display_title(&self) -> String {
        match self.release_year {
            Some(y) => format!("{} ({y})", self.title.trim()),
            None => self.title.trim().to_string(),
        }
    }

    /// What gets embedded: title, year and description.
    pub fn embed_text(&self) -> String {
        format!("{}\n{}", self.display_title(), self.description.trim())
    }

    pub fn content_hash(&self) -> String {
        text_hash(&self.embed_text())
    }
}

/// Reads JSON-lines documents, checking the description and id rules.
pub fn read_docs(reader: impl BufRead) -> Result<Vec<ExternalItemDoc>, ColdstartError> {
    let mut docs = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ColdstartError::Io { path: "<docs>".into(), msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: ExternalItemDoc =
            serde_json::from_str(&line).map_err(|e| ColdstartError::InvalidDoc { line: n + 1, msg: e.to_string() })?;
        if doc.description.trim().is_empty() {
            return Err(ColdstartError::InvalidDoc { line: n + 1, msg: format!("doc {} has no description", doc.doc_id) });
        }
        if !ids.insert(doc.doc_id.clone()) {
            return Err(ColdstartError::InvalidDoc { line: n + 1, msg: format!("duplicate doc_id {}", doc.doc_id) });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_docs(path: impl AsRef<Path>) -> Result<Vec<ExternalItemDoc>, ColdstartError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| ColdstartError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    read_docs(std::io::BufReader::new(f))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestFailure {
    pub doc_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub added: usize,
    pub updated: usize,
    pub unchanged: usize,
    pub errors: Vec<IngestFailure>,
}

/// Embeds every new or changed document into `cache`. Documents whose
/// content hash is already cached cost no provider call. A document that
/// fails to embed is reported and skipped; the rest proceed.
pub fn ingest_docs(docs: &[ExternalItemDoc], gateway: &Gateway, cache: &mut EmbeddingCache) -> IngestReport {
    let mut report = IngestReport::default();
    for doc in docs {
        let hash = doc.content_hash();
        let existing = cache.get(&doc.doc_id).map(|e| e.content_hash == hash);
        if existing == Some(true) {
            report.unchanged += 1;
            continue;
        }
        let result = gateway.embed(&doc.embed_text()).map_err(ColdstartError::from).and_then(|v| cache.insert(doc.clone(), hash, v.values));
        match result {
            Ok(()) if existing.is_some() => report.updated += 1,
            Ok(()) => report.added += 1,
            Err(e) => {
                tracing::error!(doc_id = %doc.doc_id, error = %e, "embedding failed; document skipped");
                report.errors.push(IngestFailure { doc_id: doc.doc_id.clone(), message: e.to_string() });
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub doc_id: String,
    pub similarity: f64,
}

/// How the retrieval query is formed from a request and the user's
/// preference summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// Request text followed by the preference summary when there is one.
    #[default]
    WithPreferences,
    RequestOnly,
}

pub fn query_text(request: &str, preferences: Option<&str>, mode: QueryMode) -> String {
    match (mode, preferences.map(str::trim).filter(|p| !p.is_empty())) {
        (QueryMode::WithPreferences, Some(p)) => format!("{}\n{}", request.trim(), p),
        _ => request.trim().to_string(),
    }
}

/// Embeds `query` and returns the `k` most similar cached documents.
pub fn retrieve(query: &str, k: usize, gateway: &Gateway, cache: &EmbeddingCache) -> Result<Vec<Retrieved>, ColdstartError> {
    if cache.is_empty() {
        return Err(ColdstartError::EmptyCache);
    }
    if k == 0 {
        return Err(ColdstartError::ZeroK);
    }
    let v = gateway.embed(query)?;
    cache.search(&v.values, k)
}

/// The retrieval-augmented prompt. Candidate positions in the bundle are
/// indexes into `docs`.
pub fn build_coldstart_prompt(
    forge: &PromptForge,
    query: &str,
    docs: &[&ExternalItemDoc],
    profile: &UserProfile,
    summary: &InteractionSummary,
) -> Result<PromptBundle, ColdstartError> {
    if docs.is_empty() {
        return Err(PromptError::EmptyRetrieval.into());
    }
    let n = forge.top_k.min(docs.len());
    let listed = docs
        .iter()
        .map(|d| format!("- {}: {}", d.display_title(), d.description.split_whitespace().collect::<Vec<_>>().join(" ")))
        .collect::<Vec<_>>()
        .join("\n");
    let text = forge.render(
        "coldstart",
        &Fields::from([
            ("profile", forge.profile_block(profile)?),
            ("history", forge.history_block(summary)?),
            ("request", forge.request_block(Some(query))?),
            ("docs", listed),
            ("k", n.to_string()),
        ]),
    )?;
    Ok(PromptBundle {
        system_text: forge.system_text()?,
        user_text: text,
        variant: Variant::Standard,
        temperature: forge.temperature,
        expected_format: ExpectedFormat::RankedList { n },
        candidate_order: (0..docs.len() as u32).collect(),
        flags: if summary.is_empty() { vec![FLAG_EMPTY_HISTORY.to_string()] } else { Vec::new() },
    })
}

/// Title lookup over retrieved documents, keyed by position.
pub fn doc_title_index(docs: &[&ExternalItemDoc]) -> TitleIndex {
    let titles: Vec<String> = docs.iter().map(|d| d.display_title()).collect();
    TitleIndex::new(titles.iter().enumerate().map(|(i, t)| (i as u32, t.as_str())))
}
