//! Bayesian personalized ranking loss, gradients, and negative sampling.
//!
//! For a triple (u, i, j) with score gap `x = p_u . (q_i - q_j)` the loss is
//! `softplus(-x) = -ln sigma(x)`, averaged over the batch. Gradients:
//!
//! ```text
//! s = sigma(-x)
//! dL/dp_u = -s (q_i - q_j) / |B|
//! dL/dq_i = -s p_u / |B|
//! dL/dq_j = +s p_u / |B|
//! ```

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Result, SevoError};
use crate::optim::BatchGradient;
use crate::sparse::DenseMatrix;

/// One training triple, all in row-index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub user: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Gradients of the mean BPR loss over one batch, with each table's sampled
/// set recording exactly the touched rows.
#[derive(Debug, Clone)]
pub struct BprGradients {
    pub user_grad: BatchGradient,
    pub item_grad: BatchGradient,
    pub loss: f64,
}

/// Numerically stable `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic function, evaluated through the stable branch.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_batch(
    users: &DenseMatrix,
    items: &DenseMatrix,
    batch: &[BprTriple],
) -> Result<()> {
    if batch.is_empty() {
        return Err(SevoError::Validation("empty BPR batch".into()));
    }
    if users.cols() != items.cols() {
        return Err(SevoError::ShapeMismatch(format!(
            "user dimension {} != item dimension {}",
            users.cols(),
            items.cols()
        )));
    }
    for (k, t) in batch.iter().enumerate() {
        if t.user >= users.rows() {
            return Err(SevoError::Validation(format!(
                "triple {k}: user row {} out of range",
                t.user
            )));
        }
        if t.positive >= items.rows() || t.negative >= items.rows() {
            return Err(SevoError::Validation(format!(
                "triple {k}: item out of range ({}, {})",
                t.positive, t.negative
            )));
        }
        if t.positive == t.negative {
            return Err(SevoError::Validation(format!(
                "triple {k}: positive and negative item coincide ({})",
                t.positive
            )));
        }
    }
    Ok(())
}

/// Mean BPR loss over a batch. Pure function of the embedding tables, used
/// by finite-difference checks against [`bpr_gradients`].
pub fn bpr_loss(users: &DenseMatrix, items: &DenseMatrix, batch: &[BprTriple]) -> Result<f64> {
    check_batch(users, items, batch)?;
    let mut total = 0.0;
    for t in batch {
        let x: f64 = users
            .row(t.user)
            .iter()
            .zip(items.row(t.positive).iter().zip(items.row(t.negative)))
            .map(|(p, (qi, qj))| p * (qi - qj))
            .sum();
        total += softplus(-x);
    }
    Ok(total / batch.len() as f64)
}

/// Analytic gradients of [`bpr_loss`] for both tables.
pub fn bpr_gradients(
    users: &DenseMatrix,
    items: &DenseMatrix,
    batch: &[BprTriple],
) -> Result<BprGradients> {
    check_batch(users, items, batch)?;
    let scale = 1.0 / batch.len() as f64;
    let dim = users.cols();
    let mut user_g = DenseMatrix::zeros(users.rows(), dim);
    let mut item_g = DenseMatrix::zeros(items.rows(), dim);
    let mut user_rows = BTreeSet::new();
    let mut item_rows = BTreeSet::new();
    let mut loss = 0.0;
    for t in batch {
        let p = users.row(t.user);
        let qi = items.row(t.positive);
        let qj = items.row(t.negative);
        let x: f64 = p
            .iter()
            .zip(qi.iter().zip(qj))
            .map(|(pv, (a, b))| pv * (a - b))
            .sum();
        loss += softplus(-x) * scale;
        let s = sigmoid(-x) * scale;
        for d in 0..dim {
            user_g.data_mut()[t.user * dim + d] -= s * (qi[d] - qj[d]);
            item_g.data_mut()[t.positive * dim + d] -= s * p[d];
            item_g.data_mut()[t.negative * dim + d] += s * p[d];
        }
        user_rows.insert(t.user);
        item_rows.insert(t.positive);
        item_rows.insert(t.negative);
    }
    Ok(BprGradients {
        user_grad: BatchGradient::new(user_g, user_rows)?,
        item_grad: BatchGradient::new(item_g, item_rows)?,
        loss,
    })
}

/// Draws a uniform negative item outside the user's training set by
/// rejection. Fails when no candidate exists.
pub fn sample_negative(
    train_items: &BTreeSet<usize>,
    n_items: usize,
    rng: &mut impl Rng,
) -> Result<usize> {
    if train_items.len() >= n_items {
        return Err(SevoError::Validation(
            "user has interacted with every item; no negative candidates".into(),
        ));
    }
    loop {
        let cand = rng.random_range(0..n_items);
        if !train_items.contains(&cand) {
            return Ok(cand);
        }
    }
}
