//! Candidate scores produced by other tools (e.g. LightFM or LightGCN runs),
//! read from `user_id,item_id,score` CSV files.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{rank_top_n, Candidate, CandidateSet, CandidateSource, RecsysError};
use crate::dataset::{ItemId, UserId};

#[derive(Debug, Deserialize, Serialize)]
struct ScoreRow {
    user_id: UserId,
    item_id: ItemId,
    score: f64,
}

/// Read-only candidate provider backed by imported scores.
#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    name: String,
    scores: BTreeMap<UserId, BTreeMap<ItemId, f64>>,
}

impl ExternalScores {
    pub fn from_reader(name: impl Into<String>, reader: impl Read) -> Result<Self, RecsysError> {
        let name = name.into();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut scores: BTreeMap<UserId, BTreeMap<ItemId, f64>> = BTreeMap::new();
        for (n, row) in rdr.deserialize::<ScoreRow>().enumerate() {
            let row = row.map_err(|e| RecsysError::Io { path: name.clone(), msg: format!("row {}: {e}", n + 1) })?;
            if !row.score.is_finite() {
                return Err(RecsysError::Io { path: name, msg: format!("row {}: non-finite score", n + 1) });
            }
            scores.entry(row.user_id).or_default().insert(row.item_id, row.score);
        }
        Ok(Self { name, scores })
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.scores.keys().copied()
    }
}

pub fn import_external_scores(path: impl AsRef<Path>) -> Result<ExternalScores, RecsysError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| RecsysError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    ExternalScores::from_reader(stem, file)
}

/// Writes candidate sets as `user_id,item_id,score` rows.
pub fn export_candidates_csv<'a>(sets: impl IntoIterator<Item = &'a CandidateSet>, out: impl Write) -> Result<(), RecsysError> {
    let io_err = |e: csv::Error| RecsysError::Io { path: "<export>".into(), msg: e.to_string() };
    let mut w = csv::Writer::from_writer(out);
    for set in sets {
        for c in &set.entries {
            w.serialize(ScoreRow { user_id: set.user_id, item_id: c.item_id, score: c.score }).map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| RecsysError::Io { path: "<export>".into(), msg: e.to_string() })
}

impl CandidateSource for ExternalScores {
    fn source_id(&self) -> String {
        format!("external:{}", self.name)
    }

    fn top_n_candidates(&self, user: UserId, n: usize, exclude: &BTreeSet<ItemId>) -> Result<CandidateSet, RecsysError> {
        if n == 0 {
            return Err(RecsysError::ZeroCandidates);
        }
        let rows = self.scores.get(&user).ok_or(RecsysError::UnknownUser(user))?;
        let scored = rows.iter().filter(|(i, _)| !exclude.contains(i)).map(|(&item_id, &score)| Candidate { item_id, score }).collect();
        Ok(CandidateSet { user_id: user, entries: rank_top_n(scored, n), source: self.source_id() })
    }
}
