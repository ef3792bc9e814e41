//! Baseline recommenders and the candidate sets they hand to the reranker.

mod external;
mod knn;
mod mf;
mod model_file;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{ItemId, RatingEvent, UserId};

pub use external::{export_candidates_csv, import_external_scores, ExternalScores};
pub use knn::{train_item_knn, ItemKnnHyper, ItemKnnModel, Neighbor, RatedLookup, SimilarityKind};
pub use mf::{train_mf, MfHyper, MfModel};
pub use model_file::{ModelFile, ModelKind, MODEL_FORMAT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum RecsysError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("external scores have no rows for user {0}")]
    UnknownUser(UserId),
    #[error("candidate count must be at least 1")]
    ZeroCandidates,
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Ranked top-N items for one user, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub user_id: UserId,
    pub entries: Vec<Candidate>,
    /// Identifies the model that produced the ranking; cold fallbacks say so here.
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub item_id: ItemId,
    pub score: f64,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn item_ids(&self) -> Vec<ItemId> {
        self.entries.iter().map(|c| c.item_id).collect()
    }

    pub fn top1(&self) -> Option<ItemId> {
        self.entries.first().map(|c| c.item_id)
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.entries.iter().any(|c| c.item_id == item)
    }

    pub fn is_cold_fallback(&self) -> bool {
        self.source.ends_with(POPULARITY_SUFFIX)
    }
}

pub(crate) const POPULARITY_SUFFIX: &str = "+popularity-fallback";

/// Descending score, ties by ascending item id.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score.total_cmp(&a.score).then(a.item_id.cmp(&b.item_id))
}

/// Sorts scored items under the candidate ordering and keeps the first `n`.
pub fn rank_top_n(mut scored: Vec<Candidate>, n: usize) -> Vec<Candidate> {
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, candidate_order);
        scored.truncate(n);
    }
    scored.sort_by(candidate_order);
    scored
}

/// Anything that can produce a candidate set for a user.
pub trait CandidateSource: Send + Sync {
    fn source_id(&self) -> String;

    fn top_n_candidates(&self, user: UserId, n: usize, exclude: &BTreeSet<ItemId>) -> Result<CandidateSet, RecsysError>;
}

/// Models that also predict explicit ratings.
pub trait RatingPredictor: Send + Sync {
    /// Predicted rating clipped to `[1, 5]`.
    fn predict_rating(&self, user: UserId, item: ItemId) -> f64;
}

pub(crate) fn clip_rating(x: f64) -> f64 {
    x.clamp(1.0, 5.0)
}

/// Training items per user and rating counts per item, shared by the native
/// models for exclusion and the cold popularity ranking.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct TrainIndex {
    pub items: Vec<ItemId>,
    pub popularity: BTreeMap<ItemId, u32>,
}

impl TrainIndex {
    pub fn build(train: &[RatingEvent]) -> Self {
        let mut popularity: BTreeMap<ItemId, u32> = BTreeMap::new();
        for e in train {
            *popularity.entry(e.item_id).or_default() += 1;
        }
        Self { items: popularity.keys().copied().collect(), popularity }
    }

    pub fn popularity_candidates(&self, user: UserId, n: usize, exclude: &BTreeSet<ItemId>, source: &str) -> CandidateSet {
        let scored = self
            .popularity
            .iter()
            .filter(|(i, _)| !exclude.contains(i))
            .map(|(&item_id, &c)| Candidate { item_id, score: c as f64 })
            .collect();
        CandidateSet { user_id: user, entries: rank_top_n(scored, n), source: format!("{source}{POPULARITY_SUFFIX}") }
    }
}

/// Items each user rated in `events`.
pub fn history_by_user(events: &[RatingEvent]) -> BTreeMap<UserId, BTreeSet<ItemId>> {
    let mut out: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
    for e in events {
        out.entry(e.user_id).or_default().insert(e.item_id);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_by_ascending_item() {
        let scored = vec![
            Candidate { item_id: 9, score: 1.0 },
            Candidate { item_id: 3, score: 2.0 },
            Candidate { item_id: 4, score: 1.0 },
            Candidate { item_id: 1, score: 1.0 },
        ];
        let ids: Vec<_> = rank_top_n(scored.clone(), 3).iter().map(|c| c.item_id).collect();
        assert_eq!(ids, vec![3, 1, 4]);
        let ids: Vec<_> = rank_top_n(scored, 10).iter().map(|c| c.item_id).collect();
        assert_eq!(ids, vec![3, 1, 4, 9]);
    }
}
