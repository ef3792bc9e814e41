use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{train_item_knn, train_mf, CandidateSource, ItemKnnHyper, ItemKnnModel, MfHyper, MfModel, RatingPredictor, RecsysError};
use crate::dataset::RatingEvent;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model blob: a versioned JSON document carrying the trained
/// parameters together with their hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFile {
    Mf(MfModel),
    Itemknn(ItemKnnModel),
}

/// The native recommenders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mf,
    Itemknn,
}

impl FromStr for ModelKind {
    type Err = RecsysError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mf" => Ok(Self::Mf),
            "itemknn" | "item-knn" | "knn" => Ok(Self::Itemknn),
            other => Err(RecsysError::ModelFile(format!("unknown model kind {other:?}; expected mf or itemknn"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    body: ModelFile,
}

impl ModelFile {
    /// Trains a model of `kind` with default hyperparameters and `seed`.
    pub fn train(kind: ModelKind, train: &[RatingEvent], seed: u64) -> Result<Self, RecsysError> {
        Ok(match kind {
            ModelKind::Mf => Self::Mf(train_mf(train, MfHyper { seed, ..MfHyper::default() })?),
            ModelKind::Itemknn => Self::Itemknn(train_item_knn(train, ItemKnnHyper::default())?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Mf(_) => ModelKind::Mf,
            Self::Itemknn(_) => ModelKind::Itemknn,
        }
    }

    /// The model behind both of its trait objects.
    pub fn into_shared(self) -> (Arc<dyn CandidateSource>, Arc<dyn RatingPredictor>) {
        match self {
            Self::Mf(m) => {
                let m = Arc::new(m);
                (m.clone(), m)
            }
            Self::Itemknn(m) => {
                let m = Arc::new(m);
                (m.clone(), m)
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RecsysError> {
        let path = path.as_ref();
        let env = Envelope { format_version: MODEL_FORMAT_VERSION, body: self.clone() };
        let text = serde_json::to_string(&env).map_err(|e| RecsysError::ModelFile(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| RecsysError::Io { path: path.display().to_string(), msg: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RecsysError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RecsysError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, RecsysError> {
        #[derive(Deserialize)]
        struct Version {
            format_version: Option<u32>,
        }
        let version: Version = serde_json::from_str(text).map_err(|e| RecsysError::ModelFile(e.to_string()))?;
        if version.format_version != Some(MODEL_FORMAT_VERSION) {
            return Err(RecsysError::ModelFile(format!("unsupported format_version {:?}", version.format_version)));
        }
        let env: Envelope = serde_json::from_str(text).map_err(|e| RecsysError::ModelFile(e.to_string()))?;
        let check = match &env.body {
            ModelFile::Mf(m) => m.validate(),
            ModelFile::Itemknn(m) => m.validate(),
        };
        check.map_err(RecsysError::ModelFile)?;
        Ok(env.body)
    }
}
