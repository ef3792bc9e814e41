use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, RatingEvent, UserId};

/// Which of a user's events are held out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldoutOrder {
    /// A seeded random subset of each user's events.
    #[default]
    Random,
    /// The most recent events by timestamp.
    MostRecent,
}

/// How each user's events are divided between train and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Hold out `ceil(fraction * n_u)` events of every user.
    PerUserHoldout { fraction: f64, order: HoldoutOrder },
    /// Hold out `n` events of every user.
    LeaveNOut { n: usize, order: HoldoutOrder },
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy::PerUserHoldout { fraction: 0.2, order: HoldoutOrder::Random }
    }
}

impl SplitPolicy {
    pub fn holdout_fraction(fraction: f64) -> Self {
        SplitPolicy::PerUserHoldout { fraction, order: HoldoutOrder::default() }
    }

    pub fn order(&self) -> HoldoutOrder {
        match *self {
            SplitPolicy::PerUserHoldout { order, .. } | SplitPolicy::LeaveNOut { order, .. } => order,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        match *self {
            SplitPolicy::PerUserHoldout { fraction, .. } if !(fraction > 0.0 && fraction < 1.0) => {
                Err(DataError::InvalidPolicy(format!("holdout fraction {fraction} not in (0, 1)")))
            }
            SplitPolicy::LeaveNOut { n: 0, .. } => Err(DataError::InvalidPolicy("leave-n-out needs n >= 1".into())),
            _ => Ok(()),
        }
    }

    fn holdout(&self, n_events: usize) -> usize {
        match *self {
            // the epsilon keeps 0.2 * 35 from rounding up to 8
            SplitPolicy::PerUserHoldout { fraction, .. } => (n_events as f64 * fraction - 1e-9).ceil() as usize,
            SplitPolicy::LeaveNOut { n, .. } => n,
        }
    }
}

/// A per-user train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<RatingEvent>,
    pub test: Vec<RatingEvent>,
    pub policy: SplitPolicy,
    pub seed: u64,
    /// Users left out of the test half because they had too few events.
    pub warnings: Vec<String>,
}

impl DatasetSplit {
    pub fn test_users(&self) -> BTreeSet<UserId> {
        self.test.iter().map(|e| e.user_id).collect()
    }

    pub fn train_by_user(&self) -> BTreeMap<UserId, Vec<RatingEvent>> {
        group_by_user(&self.train)
    }

    pub fn test_by_user(&self) -> BTreeMap<UserId, Vec<RatingEvent>> {
        group_by_user(&self.test)
    }

    /// Restricts both halves to the given users.
    pub fn restrict_to(&self, users: &BTreeSet<UserId>) -> DatasetSplit {
        DatasetSplit {
            train: self.train.iter().filter(|e| users.contains(&e.user_id)).copied().collect(),
            test: self.test.iter().filter(|e| users.contains(&e.user_id)).copied().collect(),
            policy: self.policy,
            seed: self.seed,
            warnings: self.warnings.clone(),
        }
    }
}

fn group_by_user(events: &[RatingEvent]) -> BTreeMap<UserId, Vec<RatingEvent>> {
    let mut out: BTreeMap<UserId, Vec<RatingEvent>> = BTreeMap::new();
    for e in events {
        out.entry(e.user_id).or_default().push(*e);
    }
    out
}

/// Draws `n` distinct user ids, returned in ascending order.
pub fn sample_users(population: impl IntoIterator<Item = UserId>, n: usize, seed: u64) -> Result<Vec<UserId>, DataError> {
    let ids: Vec<UserId> = population.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    if n > ids.len() {
        return Err(DataError::SampleTooLarge { requested: n, population: ids.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<UserId> = rand::seq::index::sample(&mut rng, ids.len(), n).into_iter().map(|i| ids[i]).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Splits every user's events into train and test.
///
/// Each user's events are first put in canonical `(timestamp, item_id)`
/// order, so the result does not depend on input order. `MostRecent` holds
/// out the tail of that order; `Random` holds out a subset drawn from one
/// generator seeded with `seed`, visiting users in ascending id order. A user
/// whose holdout would leave no training events keeps everything in train and
/// is reported in `warnings`.
pub fn split_train_test(events: &[RatingEvent], policy: SplitPolicy, seed: u64) -> Result<DatasetSplit, DataError> {
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for (user, mut mine) in group_by_user(events) {
        mine.sort_by_key(|e| (e.timestamp, e.item_id, e.rating));
        let holdout = policy.holdout(mine.len());
        if holdout >= mine.len() {
            warnings.push(format!("user {user}: {} event(s) cannot cover a holdout of {holdout}; excluded from test", mine.len()));
            train.extend(mine);
            continue;
        }
        let cut = mine.len() - holdout;
        match policy.order() {
            HoldoutOrder::MostRecent => {
                test.extend_from_slice(&mine[cut..]);
                mine.truncate(cut);
                train.extend(mine);
            }
            HoldoutOrder::Random => {
                let held: BTreeSet<usize> = rand::seq::index::sample(&mut rng, mine.len(), holdout).into_iter().collect();
                for (i, e) in mine.into_iter().enumerate() {
                    if held.contains(&i) {
                        test.push(e);
                    } else {
                        train.push(e);
                    }
                }
            }
        }
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }
    Ok(DatasetSplit { train, test, policy, seed, warnings })
}
