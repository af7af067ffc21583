//! Matrix-factorization scoring model.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SevoError};
use crate::optim::EmbeddingTable;
use crate::sparse::DenseMatrix;

/// Dot-product recommender: score(u, i) = p_u . q_i.
#[derive(Debug, Clone)]
pub struct MfModel {
    pub user_embeddings: DenseMatrix,
    pub item_embeddings: EmbeddingTable,
    pub dimension: usize,
}

impl MfModel {
    /// Initializes both tables with N(0, init_std^2) entries drawn from
    /// `rng` in a fixed order: users row-major first, then items.
    pub fn init(
        n_users: usize,
        n_items: usize,
        dimension: usize,
        init_std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(SevoError::Validation("dimension must be >= 1".into()));
        }
        if !(init_std > 0.0) || !init_std.is_finite() {
            return Err(SevoError::Validation(format!(
                "init_std must be positive and finite, got {init_std}"
            )));
        }
        let normal = Normal::new(0.0, init_std)
            .map_err(|e| SevoError::Validation(format!("bad init distribution: {e}")))?;
        let users: Vec<f64> = (0..n_users * dimension)
            .map(|_| normal.sample(rng))
            .collect();
        let items: Vec<f64> = (0..n_items * dimension)
            .map(|_| normal.sample(rng))
            .collect();
        Ok(MfModel {
            user_embeddings: DenseMatrix::from_vec(n_users, dimension, users)?,
            item_embeddings: EmbeddingTable::new(DenseMatrix::from_vec(
                n_items, dimension, items,
            )?),
            dimension,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_embeddings.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item_embeddings.embeddings.rows()
    }

    /// Dot-product score for a (user row, item) pair.
    pub fn score(&self, user_row: usize, item: usize) -> f64 {
        self.user_embeddings
            .row(user_row)
            .iter()
            .zip(self.item_embeddings.embeddings.row(item))
            .map(|(p, q)| p * q)
            .sum()
    }
}
