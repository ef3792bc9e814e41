use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use chatrec::dataset::{sample_users, split_train_test, Dataset, DatasetSplit, HoldoutOrder, SplitPolicy, UserId};
use chatrec::llm::{Binding, HttpConfig, ProviderSpec, RunLog};
use chatrec::recsys::{import_external_scores, CandidateSource, ModelFile, ModelKind, RatingPredictor};

pub const FETCH_HINT: &str = "run `python3 scripts/fetch_ml100k.py` to download MovieLens-100K into data/ml-100k";

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Order {
    Random,
    MostRecent,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding u.data, u.item and u.user.
    #[arg(long, env = "CHATREC_DATA_DIR", default_value = "data/ml-100k")]
    pub data_dir: PathBuf,
    /// Share of each user's ratings held out for testing.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, value_enum, default_value = "random")]
    pub holdout_order: Order,
    /// Seed for the split and the user sample.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate this many users drawn at random; all users when absent.
    #[arg(long)]
    pub sample_users: Option<usize>,
}

pub struct Loaded {
    pub dataset: Dataset,
    pub split: DatasetSplit,
    pub users: Vec<UserId>,
    pub load_secs: f64,
}

fn load_dataset(dir: &Path) -> Result<(Dataset, f64)> {
    if !dir.join("u.data").exists() {
        bail!("no MovieLens data in {}; {FETCH_HINT}", dir.display());
    }
    let t = Instant::now();
    let dataset = Dataset::load(dir).with_context(|| format!("loading {}", dir.display()))?;
    Ok((dataset, t.elapsed().as_secs_f64()))
}

impl DataArgs {
    pub fn policy(&self) -> SplitPolicy {
        let order = match self.holdout_order {
            Order::Random => HoldoutOrder::Random,
            Order::MostRecent => HoldoutOrder::MostRecent,
        };
        SplitPolicy::PerUserHoldout { fraction: self.holdout, order }
    }

    pub fn load(&self) -> Result<Loaded> {
        let (dataset, load_secs) = load_dataset(&self.data_dir)?;
        let split = split_train_test(dataset.ratings.events(), self.policy(), self.seed)?;
        for w in &split.warnings {
            tracing::warn!("{w}");
        }
        let users = match self.sample_users {
            Some(n) => sample_users(dataset.users.keys().copied(), n, self.seed)?,
            None => dataset.users.keys().copied().collect(),
        };
        Ok(Loaded { dataset, split, users, load_secs })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// mf, itemknn or external:<csv of user_id,item_id,score>.
    #[arg(long, default_value = "mf")]
    pub candidates: String,
    /// Load this trained model instead of training one on the split.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
}

pub struct Source {
    pub candidates: Arc<dyn CandidateSource>,
    pub predictor: Option<Arc<dyn RatingPredictor>>,
}

impl SourceArgs {
    pub fn build(&self, loaded: &Loaded, seed: u64) -> Result<Source> {
        if let Some(path) = self.candidates.strip_prefix("external:") {
            let scores = import_external_scores(path).with_context(|| format!("reading {path}"))?;
            return Ok(Source { candidates: Arc::new(scores), predictor: None });
        }
        let kind: ModelKind = self.candidates.parse()?;
        let model = match &self.model_file {
            Some(p) => {
                let m = ModelFile::load(p).with_context(|| format!("loading {}", p.display()))?;
                if m.kind() != kind {
                    bail!("{} holds a {:?} model, not {kind:?}", p.display(), m.kind());
                }
                m
            }
            None => {
                let t = Instant::now();
                let m = ModelFile::train(kind, &loaded.split.train, seed)?;
                tracing::info!(?kind, secs = t.elapsed().as_secs_f64(), "trained");
                m
            }
        };
        let (candidates, predictor) = model.into_shared();
        Ok(Source { candidates, predictor: Some(predictor) })
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// echo, stub:<script.jsonl>, replay:<run log> or http.
    #[arg(long, env = "CHATREC_PROVIDER", default_value = "echo")]
    pub provider: String,
    /// Append every provider call to this JSONL file.
    #[arg(long)]
    pub run_log: Option<PathBuf>,
    /// Extra attempts after a malformed answer.
    #[arg(long, default_value_t = chatrec::llm::DEFAULT_MAX_RETRIES)]
    pub max_retries: usize,
}

impl ProviderArgs {
    pub fn spec(&self) -> Result<ProviderSpec> {
        Ok(self.provider.parse()?)
    }

    pub fn binding(&self) -> Result<Binding> {
        let mut b = self.spec()?.binding(&HttpConfig::from_env())?;
        b.gateway = b.gateway.with_max_retries(self.max_retries);
        if let Some(p) = &self.run_log {
            let log = RunLog::open(p).with_context(|| format!("opening run log {}", p.display()))?;
            b.gateway = b.gateway.with_log(Arc::new(log));
        }
        Ok(b)
    }
}
