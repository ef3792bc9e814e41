//! Item-based k-nearest-neighbor collaborative filtering.
//!
//! Similarities are computed over co-rating users only. With adjusted cosine
//! each rating is first centered on its user's mean rating. A shrinkage term
//! multiplies every similarity by `n / (n + shrinkage)`, where `n` is the
//! number of co-raters, so pairs backed by a handful of users are damped.
//!
//! Every positive similarity is kept, sorted per item. A prediction for
//! `(user, item)` averages the user's ratings over the `k` items most similar
//! to `item` among those the user has rated.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{clip_rating, rank_top_n, Candidate, CandidateSet, CandidateSource, RatingPredictor, RecsysError, TrainIndex};
use crate::dataset::{ItemId, RatingEvent, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    Cosine,
    AdjustedCosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemKnnHyper {
    pub k: usize,
    pub similarity: SimilarityKind,
    pub shrinkage: f64,
}

impl Default for ItemKnnHyper {
    fn default() -> Self {
        Self { k: 40, similarity: SimilarityKind::AdjustedCosine, shrinkage: 10.0 }
    }
}

/// A user's ratings, looked up by item.
pub trait RatedLookup {
    fn rating_of(&self, item: ItemId) -> Option<f64>;
}

impl RatedLookup for BTreeMap<ItemId, f64> {
    fn rating_of(&self, item: ItemId) -> Option<f64> {
        self.get(&item).copied()
    }
}

impl RatedLookup for HashMap<ItemId, f64> {
    fn rating_of(&self, item: ItemId) -> Option<f64> {
        self.get(&item).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub item_id: ItemId,
    pub similarity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemKnnModel {
    pub hyper: ItemKnnHyper,
    pub global_mean: f64,
    item_means: BTreeMap<ItemId, f64>,
    /// Per item, all positively similar items, by similarity descending.
    neighbors: BTreeMap<ItemId, Vec<Neighbor>>,
    user_ratings: BTreeMap<UserId, BTreeMap<ItemId, f64>>,
    train_index: TrainIndex,
}

/// Raw co-rating statistics for one item pair.
#[derive(Debug, Clone, Copy, Default)]
struct PairSums {
    dot: f64,
    sq_a: f64,
    sq_b: f64,
    count: u32,
}

pub fn train_item_knn(train: &[RatingEvent], hyper: ItemKnnHyper) -> Result<ItemKnnModel, RecsysError> {
    if train.is_empty() {
        return Err(RecsysError::EmptyTrainingSet);
    }
    if hyper.k == 0 {
        return Err(RecsysError::InvalidHyper("k must be >= 1".into()));
    }
    if hyper.shrinkage.is_nan() || hyper.shrinkage < 0.0 {
        return Err(RecsysError::InvalidHyper("shrinkage must be >= 0".into()));
    }

    let mut user_ratings: BTreeMap<UserId, BTreeMap<ItemId, f64>> = BTreeMap::new();
    for e in train {
        user_ratings.entry(e.user_id).or_default().insert(e.item_id, e.rating as f64);
    }
    let mut item_sums: BTreeMap<ItemId, (f64, usize)> = BTreeMap::new();
    for e in train {
        let s = item_sums.entry(e.item_id).or_default();
        s.0 += e.rating as f64;
        s.1 += 1;
    }
    let item_means: BTreeMap<ItemId, f64> = item_sums.iter().map(|(&i, &(s, n))| (i, s / n as f64)).collect();
    let global_mean = train.iter().map(|e| e.rating as f64).sum::<f64>() / train.len() as f64;

    // Dense item positions and per-user centered rating lists.
    let items: Vec<ItemId> = item_means.keys().copied().collect();
    let pos: BTreeMap<ItemId, usize> = items.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let centered: Vec<Vec<(usize, f64)>> = user_ratings
        .values()
        .map(|ratings| {
            let mean = ratings.values().sum::<f64>() / ratings.len() as f64;
            ratings
                .iter()
                .map(|(i, &r)| {
                    let v = match hyper.similarity {
                        SimilarityKind::Cosine => r,
                        SimilarityKind::AdjustedCosine => r - mean,
                    };
                    (pos[i], v)
                })
                .collect()
        })
        .collect();
    let mut raters: Vec<Vec<(usize, f64)>> = vec![Vec::new(); items.len()];
    for (u, list) in centered.iter().enumerate() {
        for &(p, v) in list {
            raters[p].push((u, v));
        }
    }

    // One row at a time: accumulate the pair sums of item `a` against every
    // co-rated item. Users are visited in ascending order for every row, so
    // sim(a, b) and sim(b, a) are computed from identical floating sums.
    let mut scratch = vec![PairSums::default(); items.len()];
    let mut touched = Vec::new();
    let mut neighbors = BTreeMap::new();
    for (a, a_raters) in raters.iter().enumerate() {
        for &(u, va) in a_raters {
            for &(b, vb) in &centered[u] {
                if b == a {
                    continue;
                }
                let s = &mut scratch[b];
                if s.count == 0 {
                    touched.push(b);
                }
                s.dot += va * vb;
                s.sq_a += va * va;
                s.sq_b += vb * vb;
                s.count += 1;
            }
        }
        let mut row: Vec<Candidate> = Vec::new();
        for &b in &touched {
            let s = std::mem::take(&mut scratch[b]);
            let sim = shrunk_cosine(s, hyper.shrinkage);
            if sim > 0.0 {
                row.push(Candidate { item_id: items[b], score: sim });
            }
        }
        touched.clear();
        let n = row.len();
        let row = rank_top_n(row, n).into_iter().map(|c| Neighbor { item_id: c.item_id, similarity: c.score }).collect();
        neighbors.insert(items[a], row);
    }

    Ok(ItemKnnModel { hyper, global_mean, item_means, neighbors, user_ratings, train_index: TrainIndex::build(train) })
}

fn shrunk_cosine(s: PairSums, shrinkage: f64) -> f64 {
    let denom = s.sq_a.sqrt() * s.sq_b.sqrt();
    if s.count == 0 || denom == 0.0 {
        return 0.0;
    }
    let n = s.count as f64;
    (s.dot / denom) * (n / (n + shrinkage))
}

impl ItemKnnModel {
    pub fn neighbors(&self, item: ItemId) -> &[Neighbor] {
        self.neighbors.get(&item).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Stored similarity of `b` in `a`'s neighborhood.
    pub fn similarity(&self, a: ItemId, b: ItemId) -> Option<f64> {
        self.neighbors(a).iter().find(|n| n.item_id == b).map(|n| n.similarity)
    }

    pub fn item_mean(&self, item: ItemId) -> Option<f64> {
        self.item_means.get(&item).copied()
    }

    /// The `k` items most similar to `item` that the user has rated.
    pub fn neighborhood<'a>(&'a self, ratings: &'a impl RatedLookup, item: ItemId) -> impl Iterator<Item = (&'a Neighbor, f64)> + 'a {
        self.neighbors(item).iter().filter_map(|n| ratings.rating_of(n.item_id).map(|r| (n, r))).take(self.hyper.k)
    }

    /// Weighted average of the user's ratings over the item's neighborhood,
    /// or `None` when the user rated none of the item's similar items.
    fn neighborhood_estimate(&self, ratings: &impl RatedLookup, item: ItemId) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for (n, r) in self.neighborhood(ratings, item) {
            num += n.similarity * r;
            den += n.similarity;
        }
        (den > 0.0).then(|| num / den)
    }

    fn fallback(&self, item: ItemId) -> f64 {
        self.item_mean(item).unwrap_or(self.global_mean)
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.hyper.k == 0 {
            return Err("k must be >= 1".into());
        }
        for (item, row) in &self.neighbors {
            if row.iter().any(|n| n.item_id == *item || !(n.similarity.is_finite() && n.similarity > 0.0)) {
                return Err(format!("item {item} has an invalid neighborhood"));
            }
            if row.windows(2).any(|w| w[0].similarity < w[1].similarity) {
                return Err(format!("item {item} neighbors are not sorted by similarity"));
            }
        }
        Ok(())
    }
}

impl RatingPredictor for ItemKnnModel {
    fn predict_rating(&self, user: UserId, item: ItemId) -> f64 {
        let estimate = self.user_ratings.get(&user).and_then(|ratings| self.neighborhood_estimate(ratings, item));
        clip_rating(estimate.unwrap_or_else(|| self.fallback(item)))
    }
}

impl CandidateSource for ItemKnnModel {
    fn source_id(&self) -> String {
        "itemknn".into()
    }

    fn top_n_candidates(&self, user: UserId, n: usize, exclude: &BTreeSet<ItemId>) -> Result<CandidateSet, RecsysError> {
        if n == 0 {
            return Err(RecsysError::ZeroCandidates);
        }
        let Some(ratings) = self.user_ratings.get(&user) else {
            return Ok(self.train_index.popularity_candidates(user, n, exclude, "itemknn"));
        };
        let ratings: HashMap<ItemId, f64> = ratings.iter().map(|(&i, &r)| (i, r)).collect();
        let scored = self
            .item_means
            .keys()
            .filter(|i| !exclude.contains(i))
            .map(|&item_id| Candidate {
                item_id,
                score: self.neighborhood_estimate(&ratings, item_id).unwrap_or_else(|| self.fallback(item_id)),
            })
            .collect();
        Ok(CandidateSet { user_id: user, entries: rank_top_n(scored, n), source: self.source_id() })
    }
}
