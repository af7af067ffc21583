//! Graph-smoothing transforms applied to embedding update matrices.
//!
//! # Background
//!
//! Let `A~ = D^{-1/2} A D^{-1/2}` be the symmetrically normalized adjacency
//! of an item graph and `L~ = I - A~` its normalized Laplacian. The
//! smoothness of an embedding matrix `X` over the graph is the Laplacian
//! quadratic form
//!
//! ```text
//! J(X) = Tr(X^T L~ X),
//! ```
//!
//! which is small when strongly connected items carry similar rows.
//!
//! Given a raw update matrix `dX` (a gradient or a moment-derived step), the
//! exact smoothing operator returns the unique minimizer of
//!
//! ```text
//! (1 - beta) ||Y - dX||_F^2 + beta Tr(Y^T L~ Y),        beta in [0, 1),
//! ```
//!
//! namely `Y = (1 - beta) (I - beta A~)^{-1} dX`. Inverting the system is
//! affordable only at desk scale, so two truncated approximations are
//! provided:
//!
//! - `iterative`: the fixed-point recursion `Y_l = beta A~ Y_{l-1} +
//!   (1 - beta) dX` started at `Y_0 = dX`. Cheap, but its truncated operator
//!   carries a stray `beta^L A~^L` head term whose eigenvalues dip below
//!   zero once `beta >= 1/2`, so the output can point against `dX`.
//! - `neumann`: the order-`L` Neumann partial sum
//!   `(1 - beta) sum_{l=0..L} beta^l A~^l dX`, evaluated in Horner form with
//!   exactly `L` sparse-dense products. Its operator is positive definite
//!   for every `beta in [0, 1)`, so descent directions are preserved.
//!
//! The Neumann operator's spectrum lies in
//! `[(1-beta)/(1+beta) (1-beta^L), 1 - beta^{L+1}]`, which collapses toward
//! zero as `beta -> 1` and shrinks step sizes. The `rescaled` variant divides
//! by `1 - beta^{L+1}`, restoring a unit spectral ceiling; it is the default
//! and what the optimizers use in practice (beta = 0.99, L = 3).
//!
//! At `beta = 0` every variant is the identity map, exactly: the functions
//! short-circuit and return `dX` unchanged, so optimizers configured with
//! `beta = 0` are bit-for-bit their textbook counterparts.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SevoError};
use crate::graph::SparseGraph;
use crate::sparse::{spmm, spmm_into, to_dense, DenseMatrix};

/// Which smoothing operator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformVariant {
    /// Dense solve of `(I - beta A~) Y = (1 - beta) dX`. Desk scale only.
    Exact,
    /// Truncated fixed-point recursion; direction-aware only for beta < 1/2.
    Iterative,
    /// Order-`L` Neumann partial sum; direction-aware for all beta in [0, 1).
    Neumann,
    /// Neumann rescaled by `1 / (1 - beta^{L+1})`. Default.
    RescaledNeumann,
}

/// Smoothing configuration shared by the optimizers and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SEvoConfig {
    /// Smoothing strength `beta in [0, 1)`. Zero disables smoothing exactly.
    pub beta: f64,
    /// Truncation order `L >= 1` (ignored by the exact variant).
    pub layers: usize,
    /// Operator choice.
    pub variant: TransformVariant,
}

impl Default for SEvoConfig {
    fn default() -> Self {
        SEvoConfig {
            beta: 0.99,
            layers: 3,
            variant: TransformVariant::RescaledNeumann,
        }
    }
}

impl SEvoConfig {
    pub fn new(beta: f64, layers: usize, variant: TransformVariant) -> Result<Self> {
        let cfg = SEvoConfig {
            beta,
            layers,
            variant,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || !(0.0..1.0).contains(&self.beta) {
            return Err(SevoError::Validation(format!(
                "beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        if self.layers == 0 {
            return Err(SevoError::Validation("layers must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_rows(dx: &DenseMatrix, graph: &SparseGraph) -> Result<()> {
    if dx.rows() != graph.n_nodes() {
        return Err(SevoError::ShapeMismatch(format!(
            "update has {} rows but the graph has {} nodes",
            dx.rows(),
            graph.n_nodes()
        )));
    }
    Ok(())
}

/// Laplacian quadratic form `Tr(X^T (I - A~) X)`, evaluated as
/// `<X, X> - <X, A~ X>` with one sparse product.
pub fn smoothness(x: &DenseMatrix, graph: &SparseGraph) -> Result<f64> {
    check_rows(x, graph)?;
    let propagated = spmm(graph.normalized(), x)?;
    Ok(x.inner(x)? - x.inner(&propagated)?)
}

/// Gradient of `weight * Tr(X^T (I - A~) X)` with respect to `X`, namely
/// `2 weight (X - A~ X)`. Used by the optional explicit smoothness
/// regularizer in the training harness.
pub fn smoothness_gradient(
    x: &DenseMatrix,
    graph: &SparseGraph,
    weight: f64,
) -> Result<DenseMatrix> {
    check_rows(x, graph)?;
    if !weight.is_finite() {
        return Err(SevoError::Validation(format!(
            "regularizer weight must be finite, got {weight}"
        )));
    }
    let propagated = spmm(graph.normalized(), x)?;
    let mut out = x.clone();
    out.axpy(-1.0, &propagated)?;
    out.scale(2.0 * weight);
    Ok(out)
}

/// Exact smoothing: solves `(I - beta A~) Y = (1 - beta) dX` densely.
///
/// The system matrix is materialized under the default dense cap, so this is
/// a verification tool, not a training-path operation.
pub fn transform_exact(dx: &DenseMatrix, graph: &SparseGraph, beta: f64) -> Result<DenseMatrix> {
    if !beta.is_finite() || !(0.0..1.0).contains(&beta) {
        return Err(SevoError::Validation(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    check_rows(dx, graph)?;
    if beta == 0.0 {
        return Ok(dx.clone());
    }
    let n = graph.n_nodes();
    let dense_adj = to_dense(graph.normalized())?;
    let mut system = nalgebra::DMatrix::from_row_slice(n, n, dense_adj.data());
    system.scale_mut(-beta);
    for i in 0..n {
        system[(i, i)] += 1.0;
    }
    let mut rhs = nalgebra::DMatrix::from_row_slice(dx.rows(), dx.cols(), dx.data());
    rhs.scale_mut(1.0 - beta);
    let solution = system.lu().solve(&rhs).ok_or_else(|| {
        SevoError::Numerical("(I - beta A~) is singular; cannot smooth exactly".into())
    })?;
    // nalgebra stores column-major; copy back row-major.
    let mut out = DenseMatrix::zeros(dx.rows(), dx.cols());
    for i in 0..dx.rows() {
        for j in 0..dx.cols() {
            out.set(i, j, solution[(i, j)]);
        }
    }
    Ok(out)
}

/// Truncated fixed-point recursion `Y_l = beta A~ Y_{l-1} + (1 - beta) dX`,
/// `Y_0 = dX`, run for `layers` steps.
///
/// Warning: for `beta >= 1/2` the implied operator is not positive definite
/// (a two-node bipartite graph already exhibits `<Y, dX> < 0`), so this
/// variant can reverse descent directions. It exists as the cautionary
/// baseline; prefer [`transform_neumann`] or [`transform_rescaled`].
pub fn transform_iterative(
    dx: &DenseMatrix,
    graph: &SparseGraph,
    config: &SEvoConfig,
) -> Result<DenseMatrix> {
    config.validate()?;
    check_rows(dx, graph)?;
    if config.beta == 0.0 {
        return Ok(dx.clone());
    }
    let mut current = dx.clone();
    let mut scratch = DenseMatrix::zeros(dx.rows(), dx.cols());
    for _ in 0..config.layers {
        spmm_into(graph.normalized(), &current, &mut scratch)?;
        for (c, (s, d)) in current
            .data_mut()
            .iter_mut()
            .zip(scratch.data().iter().zip(dx.data()))
        {
            *c = config.beta * s + (1.0 - config.beta) * d;
        }
    }
    Ok(current)
}

/// Order-`L` Neumann partial sum `(1 - beta) sum_{l=0..L} beta^l A~^l dX`,
/// evaluated in Horner form: exactly `layers` sparse-dense products, cost
/// O(layers * nnz(A~) * dX.cols).
pub fn transform_neumann(
    dx: &DenseMatrix,
    graph: &SparseGraph,
    config: &SEvoConfig,
) -> Result<DenseMatrix> {
    config.validate()?;
    check_rows(dx, graph)?;
    if config.beta == 0.0 {
        return Ok(dx.clone());
    }
    // Horner: h_0 = dX, h_k = beta A~ h_{k-1} + dX, result (1 - beta) h_L.
    let mut horner = dx.clone();
    let mut scratch = DenseMatrix::zeros(dx.rows(), dx.cols());
    for _ in 0..config.layers {
        spmm_into(graph.normalized(), &horner, &mut scratch)?;
        for (h, (s, d)) in horner
            .data_mut()
            .iter_mut()
            .zip(scratch.data().iter().zip(dx.data()))
        {
            *h = config.beta * s + d;
        }
    }
    horner.scale(1.0 - config.beta);
    Ok(horner)
}

/// [`transform_neumann`] divided by its spectral ceiling `1 - beta^{L+1}`,
/// restoring unit maximum gain. This is the production default.
pub fn transform_rescaled(
    dx: &DenseMatrix,
    graph: &SparseGraph,
    config: &SEvoConfig,
) -> Result<DenseMatrix> {
    config.validate()?;
    if config.beta == 0.0 {
        check_rows(dx, graph)?;
        return Ok(dx.clone());
    }
    let mut out = transform_neumann(dx, graph, config)?;
    let ceiling = 1.0 - config.beta.powi(config.layers as i32 + 1);
    out.scale(1.0 / ceiling);
    Ok(out)
}

/// Dispatches on `config.variant`.
pub fn transform(dx: &DenseMatrix, graph: &SparseGraph, config: &SEvoConfig) -> Result<DenseMatrix> {
    match config.variant {
        TransformVariant::Exact => transform_exact(dx, graph, config.beta),
        TransformVariant::Iterative => transform_iterative(dx, graph, config),
        TransformVariant::Neumann => transform_neumann(dx, graph, config),
        TransformVariant::RescaledNeumann => transform_rescaled(dx, graph, config),
    }
}

/// Materializes the linear operator of a variant as a dense matrix by
/// applying it to the identity. Verification helper; the dense cap applies
/// through the transforms themselves only at exact-solve time, so callers
/// should keep `graph` at desk scale.
pub fn operator_dense(graph: &SparseGraph, config: &SEvoConfig) -> Result<DenseMatrix> {
    let n = graph.n_nodes();
    let mut identity = DenseMatrix::zeros(n, n);
    for i in 0..n {
        identity.set(i, i, 1.0);
    }
    transform(&identity, graph, config)
}
