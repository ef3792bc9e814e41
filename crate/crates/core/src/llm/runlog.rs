use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{LlmError, Message};

/// One provider call as written to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub request_hash: String,
    pub provider: String,
    pub model_id: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
    pub attempt: usize,
    pub response: String,
    /// `ok` or the parse error.
    pub parse_outcome: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u32>,
}

/// Append-only JSON-lines log of provider calls. Credentials never reach it:
/// records hold only the request body and the answer.
#[derive(Debug)]
pub struct RunLog {
    path: Option<PathBuf>,
    sink: Mutex<Sink>,
}

#[derive(Debug)]
enum Sink {
    File(File),
    Memory(Vec<RunRecord>),
}

impl RunLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| LlmError::RunLog(format!("{}: {e}", dir.display())))?;
        }
        let file =
            OpenOptions::new().create(true).append(true).open(path).map_err(|e| LlmError::RunLog(format!("{}: {e}", path.display())))?;
        Ok(Self { path: Some(path.to_path_buf()), sink: Mutex::new(Sink::File(file)) })
    }

    pub fn in_memory() -> Self {
        Self { path: None, sink: Mutex::new(Sink::Memory(Vec::new())) }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, record: &RunRecord) -> Result<(), LlmError> {
        let mut sink = self.sink.lock().expect("run log lock");
        match &mut *sink {
            Sink::File(f) => {
                let mut line = serde_json::to_string(record).map_err(|e| LlmError::RunLog(e.to_string()))?;
                line.push('\n');
                f.write_all(line.as_bytes()).map_err(|e| LlmError::RunLog(e.to_string()))
            }
            Sink::Memory(v) => {
                v.push(record.clone());
                Ok(())
            }
        }
    }

    /// Records written so far (in-memory logs) or read back from disk.
    pub fn records(&self) -> Result<Vec<RunRecord>, LlmError> {
        let sink = self.sink.lock().expect("run log lock");
        match &*sink {
            Sink::Memory(v) => Ok(v.clone()),
            Sink::File(_) => Self::read(self.path.as_ref().expect("file logs have a path")),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Vec<RunRecord>, LlmError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| LlmError::RunLog(format!("{}: {e}", path.display())))?;
        let mut out = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LlmError::RunLog(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| LlmError::RunLog(format!("{}:{}: {e}", path.display(), n + 1)))?);
        }
        Ok(out)
    }
}
