use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{SplitPolicy, UserId};
use crate::prompt::Variant;

use super::EvalError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// How ranking relevance and NDCG are defined, stated in every report.
pub const RANKING_CONVENTION: &str = "binary relevance (held-out rating >= threshold); DCG discount 1/log2(position + 1)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Topk,
    Rating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub per_repeat: Vec<f64>,
}

/// Published figures shipped next to measured values for comparison.
/// They come from hosted models and are never pass/fail targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub label: String,
    pub metrics: BTreeMap<String, f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub source: String,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub split_policy: SplitPolicy,
    pub split_seed: u64,
    pub sample_seed: Option<u64>,
    pub run_seed: u64,
    pub relevance_threshold: u8,
    pub k: usize,
    pub candidates: usize,
    pub users: usize,
    pub convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    /// `provider/model` of the language model binding.
    pub provider: String,
    pub model_id: String,
    pub candidate_source: String,
    pub variant: Variant,
    pub temperature: f64,
    pub repeats: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub baseline: Option<BaselineRow>,
    /// Percentage change of each mean against the baseline.
    pub delta_vs_baseline_pct: BTreeMap<String, f64>,
    pub users_evaluated: usize,
    /// Users without relevant test items.
    pub users_skipped: Vec<UserId>,
    /// Users whose list came from the fallback in at least one repeat.
    pub degraded_users: usize,
    /// (user, repeat) runs that fell back.
    pub degraded_runs: usize,
    pub pairs_total: Option<usize>,
    pub pairs_excluded: Option<usize>,
    /// False when too many rating answers were unusable.
    pub valid: bool,
    pub config: ConfigSnapshot,
    pub reference_rows: Vec<ReferenceRow>,
    pub created_at: String,
}

impl MetricReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|m| m.mean)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let r: Self = serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(EvalError::Report(format!("unsupported schema_version {}", r.schema_version)));
        }
        Ok(r)
    }
}

fn row(label: &str, pairs: &[(&str, f64)]) -> ReferenceRow {
    ReferenceRow {
        label: label.to_string(),
        metrics: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        note: "published figure, not produced by this run".to_string(),
    }
}

pub fn topk_reference_rows() -> Vec<ReferenceRow> {
    vec![
        row("published: text-davinci-003 reranker", &[("precision", 0.3240), ("recall", 0.1404), ("ndcg", 0.3802)]),
        row("published: LightGCN", &[("precision", 0.3030), ("recall", 0.1455), ("ndcg", 0.3425)]),
    ]
}

pub fn rating_reference_rows() -> Vec<ReferenceRow> {
    vec![
        row("published: text-davinci-003", &[("rmse", 0.785), ("mae", 0.593)]),
        row("published: MF", &[("rmse", 0.988), ("mae", 0.771)]),
        row("published: Item-KNN", &[("rmse", 0.933), ("mae", 0.734)]),
    ]
}

pub(crate) fn now_rfc3339() -> String {
    humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string()
}

/// The columns of the ablation grid file, one row per cell.
pub const ABLATION_COLUMNS: [&str; 11] = [
    "variant",
    "temperature",
    "repeats",
    "users_evaluated",
    "degraded_runs",
    "precision",
    "recall",
    "ndcg",
    "baseline_precision",
    "baseline_recall",
    "baseline_ndcg",
];

pub fn write_ablation_csv(reports: &[MetricReport], out: impl Write) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| EvalError::Report(e.to_string());
    w.write_record(ABLATION_COLUMNS).map_err(err)?;
    for r in reports {
        let base = |m: &str| r.baseline.as_ref().and_then(|b| b.metrics.get(m)).map(|v| v.to_string()).unwrap_or_default();
        let mean = |m: &str| r.mean(m).map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.variant.as_str().to_string(),
            r.temperature.to_string(),
            r.repeats.to_string(),
            r.users_evaluated.to_string(),
            r.degraded_runs.to_string(),
            mean("precision"),
            mean("recall"),
            mean("ndcg"),
            base("precision"),
            base("recall"),
            base("ndcg"),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Report(e.to_string()))
}

/// A short listing of one stored report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportIndexEntry {
    pub id: String,
    pub experiment: ExperimentKind,
    pub provider: String,
    pub candidate_source: String,
    pub variant: Variant,
    pub temperature: f64,
    pub repeats: usize,
    pub valid: bool,
    pub created_at: String,
    pub means: BTreeMap<String, f64>,
}

/// Reports saved as JSON files in one directory.
#[derive(Debug, Clone)]
pub struct ReportStore {
    dir: PathBuf,
}

impl ReportStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Saves `report` under a fresh id and returns the id.
    pub fn save(&self, report: &MetricReport) -> Result<String, EvalError> {
        let io = |p: &Path, e: std::io::Error| EvalError::Io { path: p.display().to_string(), msg: e.to_string() };
        std::fs::create_dir_all(&self.dir).map_err(|e| io(&self.dir, e))?;
        let stamp: String = report.created_at.chars().filter(char::is_ascii_digit).collect();
        let base = format!(
            "{stamp}-{}-{}-t{}",
            match report.experiment {
                ExperimentKind::Topk => "topk",
                ExperimentKind::Rating => "rating",
            },
            report.variant.as_str(),
            report.temperature
        );
        let mut id = base.clone();
        let mut n = 1;
        loop {
            let path = self.dir.join(format!("{id}.json"));
            match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    f.write_all(report.to_json().as_bytes()).map_err(|e| io(&path, e))?;
                    return Ok(id);
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    n += 1;
                    id = format!("{base}-{n}");
                }
                Err(e) => return Err(io(&path, e)),
            }
        }
    }

    pub fn load(&self, id: &str) -> Result<MetricReport, EvalError> {
        if id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(EvalError::Report(format!("bad report id {id:?}")));
        }
        let path = self.dir.join(format!("{id}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| EvalError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        MetricReport::from_json(&text)
    }

    /// Every readable report, ordered by id. A missing directory is an
    /// empty store.
    pub fn list(&self) -> Result<Vec<ReportIndexEntry>, EvalError> {
        let entries = match std::fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(EvalError::Io { path: self.dir.display().to_string(), msg: e.to_string() }),
        };
        let mut out = Vec::new();
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(String::from) else { continue };
            match self.load(&id) {
                Ok(r) => out.push(ReportIndexEntry {
                    means: r.metrics.iter().map(|(k, v)| (k.clone(), v.mean)).collect(),
                    id,
                    experiment: r.experiment,
                    provider: r.provider,
                    candidate_source: r.candidate_source,
                    variant: r.variant,
                    temperature: r.temperature,
                    repeats: r.repeats,
                    valid: r.valid,
                    created_at: r.created_at,
                }),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable report"),
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }
}
