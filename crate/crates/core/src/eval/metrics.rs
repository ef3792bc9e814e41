use std::collections::BTreeSet;

use crate::dataset::ItemId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("recommendation list is empty")]
    EmptyRanking,
    /// Recall and NDCG are undefined; the user is skipped.
    #[error("no relevant items")]
    NoRelevant,
    #[error("no predictions")]
    Empty,
    #[error("{pred} predictions for {truth} true values")]
    LengthMismatch { pred: usize, truth: usize },
}

fn hits(recommended: &[ItemId], relevant: &BTreeSet<ItemId>, k: usize) -> usize {
    recommended.iter().take(k).filter(|i| relevant.contains(i)).count()
}

fn check(recommended: &[ItemId], k: usize) -> Result<(), MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if recommended.is_empty() {
        return Err(MetricError::EmptyRanking);
    }
    Ok(())
}

/// Relevant items among the first `k`, divided by `k`.
pub fn precision_at_k(recommended: &[ItemId], relevant: &BTreeSet<ItemId>, k: usize) -> Result<f64, MetricError> {
    check(recommended, k)?;
    Ok(hits(recommended, relevant, k) as f64 / k as f64)
}

pub fn recall_at_k(recommended: &[ItemId], relevant: &BTreeSet<ItemId>, k: usize) -> Result<f64, MetricError> {
    check(recommended, k)?;
    if relevant.is_empty() {
        return Err(MetricError::NoRelevant);
    }
    Ok(hits(recommended, relevant, k) as f64 / relevant.len() as f64)
}

/// Binary-gain NDCG with a `log2(position + 1)` discount, positions
/// counted from 1.
pub fn ndcg_at_k(recommended: &[ItemId], relevant: &BTreeSet<ItemId>, k: usize) -> Result<f64, MetricError> {
    check(recommended, k)?;
    if relevant.is_empty() {
        return Err(MetricError::NoRelevant);
    }
    let discount = |pos: usize| 1.0 / ((pos + 1) as f64).log2();
    let dcg: f64 = recommended.iter().take(k).enumerate().filter(|(_, i)| relevant.contains(i)).map(|(p, _)| discount(p + 1)).sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    Ok(dcg / idcg)
}

fn paired(pred: &[f64], truth: &[f64]) -> Result<(), MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    paired(pred, truth)?;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    paired(pred, truth)?;
    let sae: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sae / pred.len() as f64)
}
