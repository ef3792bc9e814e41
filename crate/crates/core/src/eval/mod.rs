//! Offline experiments: top-k reranking, rating prediction and the
//! variant-by-temperature grid.
//!
//! Every run works against any [`Binding`]. With the echo provider the
//! reranker returns the recommender's own top-k, so a run reproduces the
//! baseline exactly. That is the harness's self-check.

mod metrics;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSplit, ItemId, RatingEvent, UserId, UserProfile};
use crate::dialogue::{derive_seed, rerank_candidates, DialogueError, RerankInput};
use crate::llm::{parse_rating, Binding, LlmError};
use crate::prompt::{InteractionSummary, PromptError, PromptForge, Variant, DEFAULT_CANDIDATES, DEFAULT_TEMPERATURE, DEFAULT_TOP_K};
use crate::recsys::{CandidateSource, RatingPredictor, RecsysError};

pub use metrics::{mae, ndcg_at_k, precision_at_k, recall_at_k, rmse, MetricError};
pub use report::{
    rating_reference_rows, topk_reference_rows, write_ablation_csv, BaselineRow, ConfigSnapshot, ExperimentKind, MetricReport,
    MetricSummary, ReferenceRow, ReportIndexEntry, ReportStore, ABLATION_COLUMNS, RANKING_CONVENTION, REPORT_SCHEMA_VERSION,
};

pub const DEFAULT_RELEVANCE_THRESHOLD: u8 = 4;
pub const DEFAULT_REPEATS: usize = 5;
pub const DEFAULT_EXCLUSION_CEILING: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no users to evaluate")]
    NoUsers,
    #[error("user {0} has no profile")]
    UnknownUser(UserId),
    #[error("no user had a relevant test item")]
    NothingToScore,
    #[error("repeats must be at least 1")]
    ZeroRepeats,
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Recsys(#[from] RecsysError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl From<DialogueError> for EvalError {
    fn from(e: DialogueError) -> Self {
        match e {
            DialogueError::Recsys(e) => EvalError::Recsys(e),
            DialogueError::Prompt(e) => EvalError::Prompt(e),
            DialogueError::Llm(e) => EvalError::Llm(e),
            other => EvalError::Report(other.to_string()),
        }
    }
}

/// The fixed inputs of an experiment.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub users: &'a BTreeMap<UserId, UserProfile>,
    pub split: &'a DatasetSplit,
    pub source: &'a dyn CandidateSource,
    pub binding: &'a Binding,
    pub forge: &'a PromptForge,
}

/// Repeats for one grid cell: always one at temperature 0, otherwise
/// `requested` or five.
pub fn repeats_for(temperature: f64, requested: Option<usize>) -> usize {
    if temperature == 0.0 {
        1
    } else {
        requested.unwrap_or(DEFAULT_REPEATS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopkConfig {
    pub users: Vec<UserId>,
    pub candidates: usize,
    pub k: usize,
    pub variant: Variant,
    pub temperature: f64,
    pub repeats: Option<usize>,
    pub seed: u64,
    pub sample_seed: Option<u64>,
    pub relevance_threshold: u8,
    /// Users evaluated in parallel. Order-dependent scripts need 1.
    pub workers: usize,
}

impl Default for TopkConfig {
    fn default() -> Self {
        Self {
            users: Vec::new(),
            candidates: DEFAULT_CANDIDATES,
            k: DEFAULT_TOP_K,
            variant: Variant::Standard,
            temperature: DEFAULT_TEMPERATURE,
            repeats: None,
            seed: 0,
            sample_seed: None,
            relevance_threshold: DEFAULT_RELEVANCE_THRESHOLD,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatingConfig {
    pub users: Vec<UserId>,
    pub temperature: f64,
    /// Caps the held-out pairs per user, taking the lowest item ids.
    pub max_pairs_per_user: Option<usize>,
    /// Highest tolerated share of unusable answers.
    pub exclusion_ceiling: f64,
    pub seed: u64,
    pub sample_seed: Option<u64>,
    pub workers: usize,
}

impl Default for RatingConfig {
    fn default() -> Self {
        Self {
            users: Vec::new(),
            temperature: 0.0,
            max_pairs_per_user: None,
            exclusion_ceiling: DEFAULT_EXCLUSION_CEILING,
            seed: 0,
            sample_seed: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub base: TopkConfig,
    pub variants: Vec<Variant>,
    pub temperatures: Vec<f64>,
}

/// Maps `f` over `items` on up to `workers` threads, keeping input order.
fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap_or_else(|p| p.into_inner()).into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn group(events: &[RatingEvent]) -> BTreeMap<UserId, Vec<RatingEvent>> {
    let mut out: BTreeMap<UserId, Vec<RatingEvent>> = BTreeMap::new();
    for e in events {
        out.entry(e.user_id).or_default().push(*e);
    }
    out
}

/// Averages around the first value, so equal inputs give that value back
/// bit for bit.
fn mean(xs: &[f64]) -> f64 {
    let first = xs[0];
    first + xs.iter().map(|x| x - first).sum::<f64>() / xs.len() as f64
}

fn delta_pct(metrics: &BTreeMap<String, MetricSummary>, baseline: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    metrics.iter().filter_map(|(k, m)| baseline.get(k).filter(|b| **b != 0.0).map(|b| (k.clone(), (m.mean - b) / b * 100.0))).collect()
}

const RANKING_METRICS: [&str; 3] = ["precision", "recall", "ndcg"];

fn ranking_metrics(ids: &[ItemId], relevant: &BTreeSet<ItemId>, k: usize) -> Result<[f64; 3], MetricError> {
    if ids.is_empty() {
        return Ok([0.0; 3]);
    }
    Ok([precision_at_k(ids, relevant, k)?, recall_at_k(ids, relevant, k)?, ndcg_at_k(ids, relevant, k)?])
}

/// (true rating, parsed answer, reference prediction) for one held-out pair.
type PairRow = (f64, Option<f64>, Option<f64>);

enum UserRun {
    Skipped(UserId),
    Scored { per_repeat: Vec<[f64; 3]>, degraded: usize, baseline: [f64; 3] },
}

/// Reranks each user's top candidates and scores the top-k against the
/// user's relevant held-out items.
///
/// Candidates exclude the user's training items. A rerank that still
/// fails after retries is replaced by the recommender's top-k and counted
/// as degraded. The pass runs once at temperature 0 and `repeats` times
/// otherwise; reported means average the per-repeat means.
pub fn run_topk_experiment(ctx: EvalContext<'_>, cfg: &TopkConfig) -> Result<MetricReport, EvalError> {
    if cfg.users.is_empty() {
        return Err(EvalError::NoUsers);
    }
    let repeats = repeats_for(cfg.temperature, cfg.repeats);
    if repeats == 0 {
        return Err(EvalError::ZeroRepeats);
    }
    let mut forge = ctx.forge.clone().with_temperature(cfg.temperature);
    forge.top_k = cfg.k;
    let train = group(&ctx.split.train);
    let test = group(&ctx.split.test);

    let run_user = |&user: &UserId| -> Result<UserRun, EvalError> {
        let relevant: BTreeSet<ItemId> =
            test.get(&user).into_iter().flatten().filter(|e| e.rating >= cfg.relevance_threshold).map(|e| e.item_id).collect();
        if relevant.is_empty() {
            tracing::warn!(user, "no relevant test items; skipped");
            return Ok(UserRun::Skipped(user));
        }
        let profile = ctx.users.get(&user).ok_or(EvalError::UnknownUser(user))?;
        let train_u = train.get(&user).map(Vec::as_slice).unwrap_or(&[]);
        let exclude: BTreeSet<ItemId> = train_u.iter().map(|e| e.item_id).collect();
        let candidates = ctx.source.top_n_candidates(user, cfg.candidates, &exclude)?;
        let baseline_ids: Vec<ItemId> = candidates.item_ids().into_iter().take(cfg.k).collect();
        let baseline = ranking_metrics(&baseline_ids, &relevant, cfg.k)?;
        let summary = InteractionSummary::from_events(user, train_u, forge.catalog(), forge.history_cap);
        let mut per_repeat = Vec::with_capacity(repeats);
        let mut degraded = 0;
        for r in 0..repeats {
            let input = RerankInput {
                profile,
                summary: &summary,
                candidates: &candidates,
                variant: cfg.variant,
                seed: derive_seed(cfg.seed, &[user as u64, r as u64]),
                query: None,
                prior: &[],
            };
            let ids = match rerank_candidates(&forge, ctx.binding, input) {
                Ok(rr) => rr.ids(),
                Err(
                    e
                    @ (DialogueError::Llm(_) | DialogueError::Prompt(PromptError::TooFewCandidates { .. } | PromptError::EmptyCandidates)),
                ) => {
                    tracing::warn!(user, repeat = r, error = %e, "rerank failed; scoring recommender order");
                    degraded += 1;
                    baseline_ids.clone()
                }
                Err(e) => return Err(e.into()),
            };
            per_repeat.push(ranking_metrics(&ids, &relevant, cfg.k)?);
        }
        Ok(UserRun::Scored { per_repeat, degraded, baseline })
    };

    let runs = par_map(&cfg.users, cfg.workers, run_user);
    let mut skipped = Vec::new();
    let mut scored = Vec::new();
    for run in runs {
        match run? {
            UserRun::Skipped(u) => skipped.push(u),
            UserRun::Scored { per_repeat, degraded, baseline } => scored.push((per_repeat, degraded, baseline)),
        }
    }
    if scored.is_empty() {
        return Err(EvalError::NothingToScore);
    }

    let mut metrics = BTreeMap::new();
    let mut baseline = BTreeMap::new();
    for (m, name) in RANKING_METRICS.iter().enumerate() {
        let per_repeat: Vec<f64> = (0..repeats).map(|r| mean(&scored.iter().map(|(p, _, _)| p[r][m]).collect::<Vec<_>>())).collect();
        metrics.insert(name.to_string(), MetricSummary { mean: mean(&per_repeat), per_repeat });
        baseline.insert(name.to_string(), mean(&scored.iter().map(|(_, _, b)| b[m]).collect::<Vec<_>>()));
    }
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: ExperimentKind::Topk,
        provider: ctx.binding.id(),
        model_id: ctx.binding.model_id.clone(),
        candidate_source: ctx.source.source_id(),
        variant: cfg.variant,
        temperature: cfg.temperature,
        repeats,
        delta_vs_baseline_pct: delta_pct(&metrics, &baseline),
        metrics,
        baseline: Some(BaselineRow { source: ctx.source.source_id(), metrics: baseline }),
        users_evaluated: scored.len(),
        users_skipped: skipped,
        degraded_users: scored.iter().filter(|(_, d, _)| *d > 0).count(),
        degraded_runs: scored.iter().map(|(_, d, _)| d).sum(),
        pairs_total: None,
        pairs_excluded: None,
        valid: true,
        config: ConfigSnapshot {
            split_policy: ctx.split.policy,
            split_seed: ctx.split.seed,
            sample_seed: cfg.sample_seed,
            run_seed: cfg.seed,
            relevance_threshold: cfg.relevance_threshold,
            k: cfg.k,
            candidates: cfg.candidates,
            users: cfg.users.len(),
            convention: RANKING_CONVENTION.to_string(),
        },
        reference_rows: topk_reference_rows(),
        created_at: report::now_rfc3339(),
    })
}

/// Asks for a rating on every held-out (user, item) pair of the chosen
/// users. Pairs without a usable answer after retries are excluded and
/// counted; the report is invalid when they exceed the ceiling.
///
/// `reference` supplies both the baseline row and the echo provider's
/// answers.
pub fn run_rating_experiment(
    ctx: EvalContext<'_>,
    cfg: &RatingConfig,
    reference: Option<&dyn RatingPredictor>,
) -> Result<MetricReport, EvalError> {
    if cfg.users.is_empty() {
        return Err(EvalError::NoUsers);
    }
    let forge = ctx.forge.clone().with_temperature(cfg.temperature);
    let train = group(&ctx.split.train);
    let test = group(&ctx.split.test);

    let run_user = |&user: &UserId| -> Result<Vec<PairRow>, EvalError> {
        let profile = ctx.users.get(&user).ok_or(EvalError::UnknownUser(user))?;
        let train_u = train.get(&user).map(Vec::as_slice).unwrap_or(&[]);
        let summary = InteractionSummary::from_events(user, train_u, forge.catalog(), forge.history_cap);
        let mut pairs: Vec<RatingEvent> = test.get(&user).cloned().unwrap_or_default();
        pairs.sort_by_key(|e| e.item_id);
        if let Some(cap) = cfg.max_pairs_per_user {
            pairs.truncate(cap);
        }
        let mut out = Vec::with_capacity(pairs.len());
        for e in pairs {
            let bundle = forge.build_rating_prompt(profile, &summary, e.item_id)?;
            let base = reference.map(|r| r.predict_rating(user, e.item_id));
            let mut req = ctx.binding.request(bundle.messages(), bundle.temperature);
            if let Some(b) = base {
                req = req.with_reference(format!("Rating: {b}"));
            }
            let got = match ctx.binding.gateway.complete_with_retry(&req, ctx.binding.gateway.max_retries, parse_rating) {
                Ok(a) => Some(a.value),
                Err(err) => {
                    tracing::warn!(user, item = e.item_id, error = %err, "no usable rating; pair excluded");
                    None
                }
            };
            out.push((e.rating as f64, got, base));
        }
        Ok(out)
    };

    let mut rows = Vec::new();
    for r in par_map(&cfg.users, cfg.workers, run_user) {
        rows.extend(r?);
    }
    let total = rows.len();
    let (truth, pred): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|(t, p, _)| p.map(|p| (*t, p))).unzip();
    let excluded = total - pred.len();
    if pred.is_empty() {
        return Err(EvalError::NothingToScore);
    }
    let exclusion_rate = excluded as f64 / total as f64;
    let valid = exclusion_rate <= cfg.exclusion_ceiling;
    if !valid {
        tracing::warn!(excluded, total, "exclusion rate {exclusion_rate:.3} is above the ceiling; report marked invalid");
    }
    let mut metrics = BTreeMap::new();
    let r = rmse(&pred, &truth)?;
    let m = mae(&pred, &truth)?;
    metrics.insert("rmse".to_string(), MetricSummary { mean: r, per_repeat: vec![r] });
    metrics.insert("mae".to_string(), MetricSummary { mean: m, per_repeat: vec![m] });
    let baseline = match reference {
        Some(_) => {
            let (bt, bp): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|(t, _, b)| b.map(|b| (*t, b))).unzip();
            Some(BTreeMap::from([("rmse".to_string(), rmse(&bp, &bt)?), ("mae".to_string(), mae(&bp, &bt)?)]))
        }
        None => None,
    };
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: ExperimentKind::Rating,
        provider: ctx.binding.id(),
        model_id: ctx.binding.model_id.clone(),
        candidate_source: ctx.source.source_id(),
        variant: Variant::Standard,
        temperature: cfg.temperature,
        repeats: 1,
        delta_vs_baseline_pct: baseline.as_ref().map(|b| delta_pct(&metrics, b)).unwrap_or_default(),
        metrics,
        baseline: baseline.map(|metrics| BaselineRow { source: ctx.source.source_id(), metrics }),
        users_evaluated: cfg.users.len(),
        users_skipped: Vec::new(),
        degraded_users: 0,
        degraded_runs: 0,
        pairs_total: Some(total),
        pairs_excluded: Some(excluded),
        valid,
        config: ConfigSnapshot {
            split_policy: ctx.split.policy,
            split_seed: ctx.split.seed,
            sample_seed: cfg.sample_seed,
            run_seed: cfg.seed,
            relevance_threshold: DEFAULT_RELEVANCE_THRESHOLD,
            k: 0,
            candidates: 0,
            users: cfg.users.len(),
            convention: "RMSE and MAE over parsed answers; unusable answers excluded".to_string(),
        },
        reference_rows: rating_reference_rows(),
        created_at: report::now_rfc3339(),
    })
}

/// Runs the top-k experiment for every variant and temperature.
pub fn run_ablation(ctx: EvalContext<'_>, cfg: &AblationConfig) -> Result<Vec<MetricReport>, EvalError> {
    let mut out = Vec::with_capacity(cfg.variants.len() * cfg.temperatures.len());
    for &variant in &cfg.variants {
        for &temperature in &cfg.temperatures {
            let cell = TopkConfig { variant, temperature, ..cfg.base.clone() };
            tracing::info!(variant = variant.as_str(), temperature, "ablation cell");
            out.push(run_topk_experiment(ctx, &cell)?);
        }
    }
    Ok(out)
}
