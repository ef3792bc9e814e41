use std::sync::{Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{text_hash, Completion, CompletionRequest, EmbeddingVector, LlmError, Provider};

/// Settings for an OpenAI-compatible endpoint.
#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model_id: String,
    pub embedding_model: String,
    /// Header carrying the key; `Authorization` gets a `Bearer ` prefix.
    pub auth_header: String,
    pub chat_path: String,
    pub embeddings_path: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub min_interval_ms: u64,
    pub rate_limit_retries: usize,
    pub backoff_base_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            model_id: "gpt-3.5-turbo".into(),
            embedding_model: "text-embedding-ada-002".into(),
            auth_header: "Authorization".into(),
            chat_path: "/chat/completions".into(),
            embeddings_path: "/embeddings".into(),
            timeout_secs: 60,
            max_in_flight: 4,
            min_interval_ms: 200,
            rate_limit_retries: 5,
            backoff_base_ms: 500,
        }
    }
}

impl std::fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model_id", &self.model_id)
            .field("auth_header", &self.auth_header)
            .finish_non_exhaustive()
    }
}

impl HttpConfig {
    /// Defaults overridden by `CHATREC_API_KEY`, `CHATREC_API_BASE`,
    /// `CHATREC_MODEL` and `CHATREC_EMBED_MODEL`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        c.apply_env();
        c
    }

    pub fn apply_env(&mut self) {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = var("CHATREC_API_KEY") {
            self.api_key = Some(v);
        }
        if let Some(v) = var("CHATREC_API_BASE") {
            self.base_url = v;
        }
        if let Some(v) = var("CHATREC_MODEL") {
            self.model_id = v;
        }
        if let Some(v) = var("CHATREC_EMBED_MODEL") {
            self.embedding_model = v;
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }
}

#[derive(Debug, Default)]
struct LimiterState {
    in_flight: usize,
    last_start: Option<Instant>,
}

/// Caps concurrent requests and spaces their start times.
#[derive(Debug, Default)]
struct Limiter {
    state: Mutex<LimiterState>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self, max: usize, interval: Duration) -> Permit<'_> {
        let mut st = self.state.lock().expect("limiter lock");
        loop {
            if st.in_flight < max.max(1) {
                let wait = st.last_start.map(|t| interval.saturating_sub(t.elapsed())).unwrap_or_default();
                if wait.is_zero() {
                    break;
                }
                st = self.freed.wait_timeout(st, wait).expect("limiter lock").0;
            } else {
                st = self.freed.wait(st).expect("limiter lock");
            }
        }
        st.in_flight += 1;
        st.last_start = Some(Instant::now());
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.0.state.lock().expect("limiter lock").in_flight -= 1;
        self.0.freed.notify_all();
    }
}

/// Chat completions and embeddings over HTTP.
#[derive(Debug)]
pub struct HttpProvider {
    config: HttpConfig,
    // Built on first use so that construction is safe inside an async runtime.
    client: OnceLock<reqwest::blocking::Client>,
    limiter: Limiter,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Self {
        Self { config, client: OnceLock::new(), limiter: Limiter::default() }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, LlmError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let c = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(self.client.get_or_init(|| c))
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, LlmError> {
        let client = self.client()?;
        let url = self.config.url(path);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let resp = {
                let _permit = self.limiter.acquire(self.config.max_in_flight, Duration::from_millis(self.config.min_interval_ms));
                let mut rb = client.post(&url).json(body);
                if let Some(key) = &self.config.api_key {
                    let value =
                        if self.config.auth_header.eq_ignore_ascii_case("authorization") { format!("Bearer {key}") } else { key.clone() };
                    rb = rb.header(self.config.auth_header.as_str(), value);
                }
                rb.send().map_err(|e| LlmError::Transport(e.without_url().to_string()))?
            };
            let status = resp.status().as_u16();
            match status {
                200..=299 => return resp.json().map_err(|e| LlmError::BadResponse(e.to_string())),
                401 | 403 => return Err(LlmError::Auth { status }),
                429 => {
                    if attempts > self.config.rate_limit_retries {
                        return Err(LlmError::RateLimited { attempts });
                    }
                    let delay = self.config.backoff_base_ms.saturating_mul(1 << (attempts - 1).min(16));
                    tracing::warn!(attempts, delay_ms = delay, "rate limited; backing off");
                    std::thread::sleep(Duration::from_millis(delay));
                }
                _ => {
                    let body = resp.text().unwrap_or_default();
                    return Err(LlmError::Status { status, body: body.chars().take(500).collect() });
                }
            }
        }
    }
}

impl Provider for HttpProvider {
    fn id(&self) -> String {
        format!("http:{}", self.config.model_id)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let v = self.post(&self.config.chat_path, &body)?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| LlmError::BadResponse("no choices[0].message.content".into()))?;
        let tokens = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(|x| x.as_u64()).map(|x| x as u32);
        Ok(Completion { text: text.to_string(), prompt_tokens: tokens("prompt_tokens"), completion_tokens: tokens("completion_tokens") })
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        let v = self.post(&self.config.embeddings_path, &json!({ "model": self.config.embedding_model, "input": text }))?;
        let arr = v
            .pointer("/data/0/embedding")
            .and_then(|e| e.as_array())
            .ok_or_else(|| LlmError::BadResponse("no data[0].embedding".into()))?;
        let values = arr
            .iter()
            .map(|x| x.as_f64().map(|f| f as f32))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| LlmError::BadResponse("non-numeric embedding component".into()))?;
        Ok(EmbeddingVector { values, source_text_hash: text_hash(text) })
    }
}
