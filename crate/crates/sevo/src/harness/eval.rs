//! Top-N ranking evaluation: hit rate and NDCG.
//!
//! Each held-out item is ranked against every item by dot-product score,
//! ties broken by ascending item id so results do not depend on sort
//! internals. By default the full catalog is ranked (training items are not
//! masked); masking can be enabled explicitly, in which case the target item
//! itself is never masked even when it reoccurs in the user's history.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SevoError};
use crate::harness::model::MfModel;
use crate::harness::split::{EvalSplit, Holdout, UserIndex};

/// Ranking metric family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    HitRate,
    Ndcg,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::HitRate => write!(f, "hr"),
            Metric::Ndcg => write!(f, "ndcg"),
        }
    }
}

/// One metric at one cutoff, averaged over evaluated users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: Metric,
    pub cutoff: usize,
    pub value: f64,
}

/// Evaluation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Top-N cutoffs, each >= 1.
    pub cutoffs: Vec<usize>,
    /// Whether to exclude the user's training items from the ranking.
    pub mask_train_items: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cutoffs: vec![5, 10],
            mask_train_items: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() {
            return Err(SevoError::Validation("no evaluation cutoffs given".into()));
        }
        if self.cutoffs.iter().any(|&n| n == 0) {
            return Err(SevoError::Validation("cutoffs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Metric averages plus how many users were evaluated or skipped (skipped
/// users are holdout entries with no row in the user index).
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub metrics: Vec<MetricValue>,
    pub evaluated_users: usize,
    pub skipped_users: usize,
}

impl EvalOutcome {
    /// Convenience lookup.
    pub fn get(&self, metric: Metric, cutoff: usize) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.metric == metric && m.cutoff == cutoff)
            .map(|m| m.value)
    }
}

/// 1-based rank of `target` among all items for one user, ties broken by
/// ascending item id. Masked items are excluded outright; the target is
/// never masked.
fn rank_of_target(scores: &[f64], target: usize, masked: Option<&[bool]>) -> usize {
    let st = scores[target];
    let mut rank = 1usize;
    for (j, &s) in scores.iter().enumerate() {
        if j == target {
            continue;
        }
        if let Some(mask) = masked {
            if mask[j] {
                continue;
            }
        }
        if s > st || (s == st && j < target) {
            rank += 1;
        }
    }
    rank
}

/// Evaluates HR@N and NDCG@N over a holdout map, parallelizing over users.
/// Per-user results are collected in index order and reduced sequentially,
/// so the outcome is independent of thread count.
pub fn evaluate(
    model: &MfModel,
    split: &EvalSplit,
    user_index: &UserIndex,
    holdout: Holdout,
    config: &EvalConfig,
) -> Result<EvalOutcome> {
    config.validate()?;
    let holdout_map = match holdout {
        Holdout::Valid => &split.valid,
        Holdout::Test => &split.test,
    };
    let n_items = model.n_items();
    if split.train.n_items() != n_items {
        return Err(SevoError::ShapeMismatch(format!(
            "model has {} items, split has {}",
            n_items,
            split.train.n_items()
        )));
    }
    let entries: Vec<(u64, usize)> = holdout_map.iter().map(|(&u, &i)| (u, i)).collect();
    let skipped_users = entries
        .iter()
        .filter(|(u, _)| user_index.row(*u).is_none())
        .count();
    // (rank, cutoff hits...) per evaluated user, in holdout order.
    let per_user: Vec<Option<usize>> = entries
        .par_iter()
        .map(|&(user, target)| {
            let row = user_index.row(user)?;
            let p = model.user_embeddings.row(row);
            let mut scores = vec![0.0f64; n_items];
            for (item, s) in scores.iter_mut().enumerate() {
                *s = model
                    .item_embeddings
                    .embeddings
                    .row(item)
                    .iter()
                    .zip(p)
                    .map(|(q, pv)| q * pv)
                    .sum();
            }
            let mask = if config.mask_train_items {
                let mut m = vec![false; n_items];
                if let Some(seq) = split.train.sequences().get(&user) {
                    for &i in seq {
                        m[i] = true;
                    }
                }
                m[target] = false;
                Some(m)
            } else {
                None
            };
            Some(rank_of_target(&scores, target, mask.as_deref()))
        })
        .collect();
    let evaluated: Vec<usize> = per_user.into_iter().flatten().collect();
    if evaluated.is_empty() {
        return Err(SevoError::Validation(
            "no holdout user matches the user index; nothing to evaluate".into(),
        ));
    }
    let denom = evaluated.len() as f64;
    let mut metrics = Vec::with_capacity(config.cutoffs.len() * 2);
    for &cutoff in &config.cutoffs {
        let mut hits = 0.0f64;
        let mut ndcg = 0.0f64;
        for &rank in &evaluated {
            if rank <= cutoff {
                hits += 1.0;
                ndcg += 1.0 / ((rank as f64) + 1.0).log2();
            }
        }
        metrics.push(MetricValue {
            metric: Metric::HitRate,
            cutoff,
            value: hits / denom,
        });
        metrics.push(MetricValue {
            metric: Metric::Ndcg,
            cutoff,
            value: ndcg / denom,
        });
    }
    Ok(EvalOutcome {
        metrics,
        evaluated_users: evaluated.len(),
        skipped_users,
    })
}
