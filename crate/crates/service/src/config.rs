use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use chatrec::dialogue::DialogueConfig;
use chatrec::llm::HttpConfig;

use crate::ServiceError;

/// Everything `chatrec serve` needs, read from a TOML file and then
/// overridden by `CHATREC_*` environment variables.
///
/// ```toml
/// data_dir = "data/ml-100k"
/// candidates = "mf"            # mf, itemknn or external:<csv>
/// provider = "echo"            # echo, stub:<script>, replay:<run log> or http
/// reports_dir = "reports"
///
/// [server]
/// port = 8080
/// cors_origins = ["http://localhost:5173"]
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub candidates: String,
    /// Trained model to load instead of training at startup.
    pub model_file: Option<PathBuf>,
    pub provider: String,
    pub seed: u64,
    pub reports_dir: PathBuf,
    /// Where the document cache lives. Without it the new-item path is off.
    pub coldstart_dir: Option<PathBuf>,
    /// Sessions are written here on shutdown and read back at startup.
    pub snapshot: Option<PathBuf>,
    pub server: ServerConfig,
    pub dialogue: DialogueConfig,
    pub http: HttpConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Allowed browser origins; `*` allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 8080, cors_origins: vec!["http://localhost:5173".into()] }
    }
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: "data/ml-100k".into(),
            candidates: "mf".into(),
            model_file: None,
            provider: "echo".into(),
            seed: 0,
            reports_dir: "reports".into(),
            coldstart_dir: None,
            snapshot: None,
            server: ServerConfig::default(),
            dialogue: DialogueConfig::default(),
            http: HttpConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies overrides from `var`, which is `std::env::var` in production.
    pub fn apply_overrides(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        let var = |k: &str| var(k).filter(|v| !v.is_empty());
        if let Some(v) = var("CHATREC_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = var("CHATREC_CANDIDATES") {
            self.candidates = v;
        }
        if let Some(v) = var("CHATREC_MODEL_FILE") {
            self.model_file = Some(v.into());
        }
        if let Some(v) = var("CHATREC_PROVIDER") {
            self.provider = v;
        }
        if let Some(v) = var("CHATREC_REPORTS_DIR") {
            self.reports_dir = v.into();
        }
        if let Some(v) = var("CHATREC_COLDSTART_DIR") {
            self.coldstart_dir = Some(v.into());
        }
        if let Some(v) = var("CHATREC_SNAPSHOT") {
            self.snapshot = Some(v.into());
        }
        if let Some(v) = var("CHATREC_HOST") {
            self.server.host = v;
        }
        if let Some(v) = var("CHATREC_PORT") {
            self.server.port = v.parse().map_err(|_| ServiceError::Config(format!("CHATREC_PORT: not a port: {v:?}")))?;
        }
        if let Some(v) = var("CHATREC_CORS_ORIGINS") {
            self.server.cors_origins = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<(), ServiceError> {
        self.http.apply_env();
        self.apply_overrides(|k| std::env::var(k).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut c = ServiceConfig::from_toml(
            r#"
            data_dir = "x"
            provider = "stub:s.jsonl"
            [server]
            port = 9000
            [dialogue]
            candidates = 30
            "#,
        )
        .unwrap();
        assert_eq!(c.server.port, 9000);
        assert_eq!(c.dialogue.candidates, 30);
        assert_eq!(c.dialogue.context_turns, 5);
        assert_eq!(c.candidates, "mf");
        c.apply_overrides(|k| match k {
            "CHATREC_PORT" => Some("9100".into()),
            "CHATREC_CORS_ORIGINS" => Some("http://a, http://b".into()),
            "CHATREC_DATA_DIR" => Some(String::new()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.server.port, 9100);
        assert_eq!(c.server.cors_origins, ["http://a", "http://b"]);
        assert_eq!(c.data_dir, PathBuf::from("x"));
        assert!(c.apply_overrides(|k| (k == "CHATREC_PORT").then(|| "many".into())).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_by_type() {
        assert!(ServiceConfig::from_toml("[server]\nport = \"eighty\"").is_err());
    }
}
