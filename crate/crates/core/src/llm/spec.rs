use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use super::{EchoStub, Gateway, HttpConfig, HttpProvider, LlmError, Provider, Script, ScriptedStub};

/// A provider chosen on the command line or in a config file.
///
/// | text | provider |
/// |---|---|
/// | `echo`, `stub`, `stub:echo` | [`EchoStub`] |
/// | `stub:<file>` | [`ScriptedStub`] over a script file |
/// | `replay:<file>` | [`ScriptedStub`] over a recorded run log |
/// | `http` | [`HttpProvider`] configured from the environment |
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Echo,
    Script(PathBuf),
    Replay(PathBuf),
    Http,
}

impl FromStr for ProviderSpec {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "echo" | "stub" | "stub:echo" => return Ok(Self::Echo),
            "http" => return Ok(Self::Http),
            _ => {}
        }
        let (head, path) = s.split_once(':').unwrap_or((s, ""));
        match (head, path.is_empty()) {
            ("stub" | "script", false) => Ok(Self::Script(path.into())),
            ("replay", false) => Ok(Self::Replay(path.into())),
            _ => Err(LlmError::Config(format!("unknown provider {s:?}; expected echo, stub:<script>, replay:<run log> or http"))),
        }
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Echo => f.write_str("echo"),
            Self::Script(p) => write!(f, "stub:{}", p.display()),
            Self::Replay(p) => write!(f, "replay:{}", p.display()),
            Self::Http => f.write_str("http"),
        }
    }
}

impl ProviderSpec {
    /// Builds the provider. `http` settings come from `http`; the returned
    /// string is the model id to put in requests.
    pub fn build(&self, http: &HttpConfig) -> Result<(Arc<dyn Provider>, String), LlmError> {
        Ok(match self {
            Self::Echo => (Arc::new(EchoStub), "reference".to_string()),
            Self::Script(p) => (Arc::new(ScriptedStub::new(Script::load(p)?)), "scripted".to_string()),
            Self::Replay(p) => (Arc::new(ScriptedStub::new(Script::from_run_log(p)?)), "replay".to_string()),
            Self::Http => {
                if http.api_key.is_none() {
                    return Err(LlmError::Config("http provider needs CHATREC_API_KEY".into()));
                }
                (Arc::new(HttpProvider::new(http.clone())), http.model_id.clone())
            }
        })
    }

    pub fn binding(&self, http: &HttpConfig) -> Result<super::Binding, LlmError> {
        let (provider, model) = self.build(http)?;
        Ok(super::Binding::new(Gateway::new(provider), model))
    }

    pub fn is_live(&self) -> bool {
        matches!(self, Self::Http)
    }
}
