//! Synthetic clustered interaction data.
//!
//! Items are partitioned evenly into clusters; each user is assigned a home
//! cluster and draws each interaction from it with probability
//! `intra_cluster_prob`, otherwise uniformly from the other clusters'
//! items. The induced co-occurrence graph is strongly block-diagonal, which
//! is the regime where smoothing updates over the item graph should help:
//! items of a cluster are near-exchangeable, so pulling their embeddings
//! together is the right inductive bias.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Result, SevoError};
use crate::graph::InteractionLog;

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_items: usize,
    pub n_users: usize,
    pub n_clusters: usize,
    /// Interactions per user.
    pub seq_len: usize,
    /// Probability that an interaction stays in the user's home cluster.
    pub intra_cluster_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_items: 200,
            n_users: 500,
            n_clusters: 10,
            seq_len: 20,
            intra_cluster_prob: 0.9,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n_items < self.n_clusters {
            return Err(SevoError::Validation(format!(
                "need 1 <= n_clusters <= n_items, got {} clusters over {} items",
                self.n_clusters, self.n_items
            )));
        }
        if self.n_users == 0 || self.seq_len == 0 {
            return Err(SevoError::Validation(
                "n_users and seq_len must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.intra_cluster_prob) {
            return Err(SevoError::Validation(format!(
                "intra_cluster_prob must lie in [0, 1], got {}",
                self.intra_cluster_prob
            )));
        }
        Ok(())
    }

    /// Cluster of item `i` under proportional binning: clusters differ in
    /// size by at most one item.
    pub fn cluster_of(&self, item: usize) -> usize {
        item * self.n_clusters / self.n_items
    }
}

/// Generates the interaction log and the item -> cluster assignment.
/// Deterministic per spec (including the seed); timestamps are sequence
/// positions.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(InteractionLog, Vec<usize>)> {
    spec.validate()?;
    let clusters: Vec<usize> = (0..spec.n_items).map(|i| spec.cluster_of(i)).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.n_clusters];
    for (item, &c) in clusters.iter().enumerate() {
        members[c].push(item);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sequences: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for user in 0..spec.n_users as u64 {
        let home = rng.random_range(0..spec.n_clusters);
        let mut seq = Vec::with_capacity(spec.seq_len);
        for _ in 0..spec.seq_len {
            let stay = spec.n_clusters == 1
                || rng.random_range(0.0..1.0) < spec.intra_cluster_prob;
            let item = if stay {
                members[home][rng.random_range(0..members[home].len())]
            } else {
                // Uniform over items outside the home cluster, by rejection.
                loop {
                    let cand = rng.random_range(0..spec.n_items);
                    if clusters[cand] != home {
                        break cand;
                    }
                }
            };
            seq.push(item);
        }
        sequences.insert(user, seq);
    }
    Ok((InteractionLog::new(sequences, spec.n_items)?, clusters))
}
