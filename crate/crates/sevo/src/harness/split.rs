//! Chronological leave-one-out splitting and user-row indexing.

use std::collections::BTreeMap;

use crate::error::{Result, SevoError};
use crate::graph::InteractionLog;

/// Train sequences plus one held-out validation and one held-out test item
/// per user (the second-to-last and last interactions respectively).
#[derive(Debug, Clone)]
pub struct EvalSplit {
    pub train: InteractionLog,
    pub valid: BTreeMap<u64, usize>,
    pub test: BTreeMap<u64, usize>,
}

/// Which held-out map to evaluate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Holdout {
    Valid,
    Test,
}

/// Splits each user's chronological sequence into train / valid / test by
/// holding out the last two interactions. Every sequence must have length
/// at least 3 so the train part stays non-empty.
pub fn leave_one_out(log: &InteractionLog) -> Result<EvalSplit> {
    let mut train = BTreeMap::new();
    let mut valid = BTreeMap::new();
    let mut test = BTreeMap::new();
    for (&user, seq) in log.sequences() {
        if seq.len() < 3 {
            return Err(SevoError::Validation(format!(
                "user {user} has {} interactions; leave-one-out needs at least 3 \
                 (filter short sequences first)",
                seq.len()
            )));
        }
        let n = seq.len();
        train.insert(user, seq[..n - 2].to_vec());
        valid.insert(user, seq[n - 2]);
        test.insert(user, seq[n - 1]);
    }
    Ok(EvalSplit {
        train: InteractionLog::new(train, log.n_items())?,
        valid,
        test,
    })
}

/// Stable mapping between external user ids and contiguous embedding rows.
/// Rows are assigned in ascending id order.
#[derive(Debug, Clone)]
pub struct UserIndex {
    ids: Vec<u64>,
    rows: BTreeMap<u64, usize>,
}

impl UserIndex {
    pub fn from_log(log: &InteractionLog) -> Self {
        let ids: Vec<u64> = log.sequences().keys().copied().collect();
        let rows = ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        UserIndex { ids, rows }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, id: u64) -> Option<usize> {
        self.rows.get(&id).copied()
    }

    pub fn id(&self, row: usize) -> u64 {
        self.ids[row]
    }
}
