//! Biased matrix factorization trained with stochastic gradient descent.
//!
//! Predictions are `mu + b_u + b_i + p_u . q_i`. Training minimizes
//!
//! ```text
//! sum_(u,i) (r_ui - r̂_ui)^2 + reg * (|p_u|^2 + |q_i|^2 + b_u^2 + b_i^2)
//! ```
//!
//! visiting the training events in a seeded shuffled order every epoch.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clip_rating, rank_top_n, Candidate, CandidateSet, CandidateSource, RatingPredictor, RecsysError, TrainIndex};
use crate::dataset::{ItemId, RatingEvent, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfHyper {
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    /// Factors start uniform in `[-init_range, init_range]`.
    pub init_range: f64,
    pub seed: u64,
}

impl Default for MfHyper {
    fn default() -> Self {
        Self { factors: 32, learning_rate: 0.005, regularization: 0.02, epochs: 50, init_range: 0.05, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MfModel {
    pub hyper: MfHyper,
    pub global_mean: f64,
    user_index: BTreeMap<UserId, usize>,
    item_index: BTreeMap<ItemId, usize>,
    /// Row-major `|U| x d`.
    user_factors: Vec<f64>,
    /// Row-major `|I| x d`.
    item_factors: Vec<f64>,
    user_bias: Vec<f64>,
    item_bias: Vec<f64>,
    train_index: TrainIndex,
    /// Objective value before the first epoch and after each epoch.
    pub loss_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn train_mf(train: &[RatingEvent], hyper: MfHyper) -> Result<MfModel, RecsysError> {
    if train.is_empty() {
        return Err(RecsysError::EmptyTrainingSet);
    }
    if hyper.factors == 0 {
        return Err(RecsysError::InvalidHyper("factors must be >= 1".into()));
    }
    if hyper.learning_rate.is_nan() || hyper.learning_rate <= 0.0 || hyper.regularization < 0.0 || hyper.init_range < 0.0 {
        return Err(RecsysError::InvalidHyper(format!("{hyper:?}")));
    }

    let users: BTreeSet<UserId> = train.iter().map(|e| e.user_id).collect();
    let items: BTreeSet<ItemId> = train.iter().map(|e| e.item_id).collect();
    let user_index: BTreeMap<_, _> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let item_index: BTreeMap<_, _> = items.iter().enumerate().map(|(i, &it)| (it, i)).collect();
    let d = hyper.factors;

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut init = |n: usize| -> Vec<f64> {
        (0..n * d).map(|_| if hyper.init_range > 0.0 { rng.gen_range(-hyper.init_range..=hyper.init_range) } else { 0.0 }).collect()
    };
    let user_factors = init(users.len());
    let item_factors = init(items.len());

    let global_mean = train.iter().map(|e| e.rating as f64).sum::<f64>() / train.len() as f64;
    let mut model = MfModel {
        hyper,
        global_mean,
        user_index,
        item_index,
        user_factors,
        item_factors,
        user_bias: vec![0.0; users.len()],
        item_bias: vec![0.0; items.len()],
        train_index: TrainIndex::build(train),
        loss_history: Vec::with_capacity(hyper.epochs + 1),
    };

    // (user row, item row, rating)
    let mut samples: Vec<(usize, usize, f64)> =
        train.iter().map(|e| (model.user_index[&e.user_id], model.item_index[&e.item_id], e.rating as f64)).collect();
    model.loss_history.push(model.objective(&samples));

    let (lr, reg) = (hyper.learning_rate, hyper.regularization);
    for epoch in 1..=hyper.epochs {
        samples.shuffle(&mut rng);
        for &(u, i, r) in &samples {
            let pu = u * d..(u + 1) * d;
            let qi = i * d..(i + 1) * d;
            let err = r
                - (global_mean
                    + model.user_bias[u]
                    + model.item_bias[i]
                    + dot(&model.user_factors[pu.clone()], &model.item_factors[qi.clone()]));
            model.user_bias[u] += lr * (err - reg * model.user_bias[u]);
            model.item_bias[i] += lr * (err - reg * model.item_bias[i]);
            for f in 0..d {
                let p = model.user_factors[pu.start + f];
                let q = model.item_factors[qi.start + f];
                model.user_factors[pu.start + f] += lr * (err * q - reg * p);
                model.item_factors[qi.start + f] += lr * (err * p - reg * q);
            }
        }
        let loss = model.objective(&samples);
        if !loss.is_finite() {
            return Err(RecsysError::Diverged { epoch, loss });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}

impl MfModel {
    fn raw(&self, u: usize, i: usize) -> f64 {
        let d = self.hyper.factors;
        self.global_mean
            + self.user_bias[u]
            + self.item_bias[i]
            + dot(&self.user_factors[u * d..(u + 1) * d], &self.item_factors[i * d..(i + 1) * d])
    }

    fn objective(&self, samples: &[(usize, usize, f64)]) -> f64 {
        let d = self.hyper.factors;
        let reg = self.hyper.regularization;
        samples
            .iter()
            .map(|&(u, i, r)| {
                let e = r - self.raw(u, i);
                let pu = &self.user_factors[u * d..(u + 1) * d];
                let qi = &self.item_factors[i * d..(i + 1) * d];
                e * e + reg * (dot(pu, pu) + dot(qi, qi) + self.user_bias[u].powi(2) + self.item_bias[i].powi(2))
            })
            .sum()
    }

    /// Unclipped model score, used for ranking. `None` for ids outside training.
    pub fn score(&self, user: UserId, item: ItemId) -> Option<f64> {
        let u = *self.user_index.get(&user)?;
        let i = *self.item_index.get(&item)?;
        Some(self.raw(u, i))
    }

    pub fn knows_user(&self, user: UserId) -> bool {
        self.user_index.contains_key(&user)
    }

    pub fn n_users(&self) -> usize {
        self.user_index.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_index.len()
    }

    /// Checks the structural invariants after deserialization.
    pub(crate) fn validate(&self) -> Result<(), String> {
        let d = self.hyper.factors;
        if d == 0 {
            return Err("factors must be >= 1".into());
        }
        if self.user_factors.len() != self.user_index.len() * d || self.item_factors.len() != self.item_index.len() * d {
            return Err("factor matrix shape does not match the id maps".into());
        }
        if self.user_bias.len() != self.user_index.len() || self.item_bias.len() != self.item_index.len() {
            return Err("bias vector length does not match the id maps".into());
        }
        let finite =
            self.user_factors.iter().chain(&self.item_factors).chain(&self.user_bias).chain(&self.item_bias).all(|x| x.is_finite());
        if !finite || !self.global_mean.is_finite() {
            return Err("non-finite parameter".into());
        }
        Ok(())
    }
}

impl RatingPredictor for MfModel {
    fn predict_rating(&self, user: UserId, item: ItemId) -> f64 {
        clip_rating(self.score(user, item).unwrap_or(self.global_mean))
    }
}

impl CandidateSource for MfModel {
    fn source_id(&self) -> String {
        "mf".into()
    }

    fn top_n_candidates(&self, user: UserId, n: usize, exclude: &BTreeSet<ItemId>) -> Result<CandidateSet, RecsysError> {
        if n == 0 {
            return Err(RecsysError::ZeroCandidates);
        }
        let Some(&u) = self.user_index.get(&user) else {
            return Ok(self.train_index.popularity_candidates(user, n, exclude, "mf"));
        };
        let scored = self
            .item_index
            .iter()
            .filter(|(item, _)| !exclude.contains(item))
            .map(|(&item_id, &i)| Candidate { item_id, score: self.raw(u, i) })
            .collect();
        Ok(CandidateSet { user_id: user, entries: rank_top_n(scored, n), source: self.source_id() })
    }
}
