//! Optimizers whose embedding updates pass through a graph-smoothing
//! transform.
//!
//! Three steppers are provided. All of them compute a raw update matrix the
//! way their textbook counterpart would, smooth it with the configured
//! transform, and apply the smoothed matrix:
//!
//! - [`step_sgd`]: momentum SGD with coupled weight decay
//!   (`G = grad + lambda E`, `M = mu M + G`, `E -= eta psi(M)`).
//! - [`step_adam`]: Adam with coupled decay; first and second moments are
//!   maintained for every row on every step.
//! - [`step_adamw`]: AdamW with decoupled decay. Moments of rows absent from
//!   the batch are handled by one of two idle policies, selected by
//!   `moment_correction`:
//!     - off: moments decay as `m *= beta1`, `v *= beta2` (what a dense
//!       implementation does implicitly). Bias correction then no longer
//!       cancels the decay, so an idle row's update magnitude drifts by
//!       `beta1^p / sqrt(beta2^p)` over an idle gap of length `p`, scaled by
//!       a ratio of bias terms: with beta1 < sqrt(beta2) the updates decay,
//!       otherwise they can grow.
//!     - on: the decay is compensated so that the bias-corrected moments
//!       `m / (1 - beta1^t)` and `v / (1 - beta2^t)` stay exactly constant
//!       while a row is idle, making idle updates stationary.
//!
//! At `beta = 0` in the smoothing config every stepper reduces bit-for-bit
//! to its textbook form; the reference implementations under
//! [`crate::verify::reference`] pin that equivalence in tests.
//!
//! Dense (non-embedding) parameters take plain unsmoothed gradient steps via
//! [`dense_param_step`], with their own learning rate when configured.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SevoError};
use crate::graph::SparseGraph;
use crate::sparse::DenseMatrix;
use crate::transform::{transform, SEvoConfig};
use crate::util::sha256_hex;

/// Hyperparameters shared by all steppers. Fields irrelevant to a given
/// stepper (e.g. `momentum` for Adam) are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Embedding learning rate `eta > 0`.
    pub learning_rate: f64,
    /// First-moment decay for Adam/AdamW, in [0, 1).
    pub beta1: f64,
    /// Second-moment decay for Adam/AdamW, in [0, 1).
    pub beta2: f64,
    /// Momentum `mu` for SGD, in [0, 1].
    pub momentum: f64,
    /// Weight decay `lambda >= 0`; coupled for SGD/Adam, decoupled for AdamW.
    pub weight_decay: f64,
    /// Adam denominator floor, added under the square root. Must be > 0.
    pub epsilon: f64,
    /// Whether AdamW keeps bias-corrected moments constant across idle gaps.
    pub moment_correction: bool,
    /// Learning rate for dense parameters; defaults to `learning_rate`.
    pub dense_learning_rate: Option<f64>,
    /// Smoothing applied to embedding updates.
    pub sevo: SEvoConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            momentum: 0.9,
            weight_decay: 0.0,
            epsilon: 1e-8,
            moment_correction: true,
            dense_learning_rate: None,
            sevo: SEvoConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64, name: &str| -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(SevoError::Validation(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
            Ok(())
        };
        finite_pos(self.learning_rate, "learning_rate")?;
        finite_pos(self.epsilon, "epsilon")?;
        if let Some(lr) = self.dense_learning_rate {
            finite_pos(lr, "dense_learning_rate")?;
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(SevoError::Validation(format!(
                "beta1 must lie in [0, 1), got {}",
                self.beta1
            )));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(SevoError::Validation(format!(
                "beta2 must lie in [0, 1), got {}",
                self.beta2
            )));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(SevoError::Validation(format!(
                "momentum must lie in [0, 1], got {}",
                self.momentum
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(SevoError::Validation(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        self.sevo.validate()
    }

    /// Learning rate for dense parameters.
    pub fn dense_lr(&self) -> f64 {
        self.dense_learning_rate.unwrap_or(self.learning_rate)
    }
}

/// Per-table optimizer state: first/second moment matrices and step count.
/// SGD uses `first_moment` as its momentum buffer and leaves `second_moment`
/// at zero.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    first_moment: DenseMatrix,
    second_moment: DenseMatrix,
    step: u64,
}

impl OptimizerState {
    pub fn new(rows: usize, cols: usize) -> Self {
        OptimizerState {
            first_moment: DenseMatrix::zeros(rows, cols),
            second_moment: DenseMatrix::zeros(rows, cols),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &DenseMatrix {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &DenseMatrix {
        &self.second_moment
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.first_moment.rows() != rows || self.first_moment.cols() != cols {
            return Err(SevoError::ShapeMismatch(format!(
                "optimizer state is {}x{}, embeddings are {}x{}",
                self.first_moment.rows(),
                self.first_moment.cols(),
                rows,
                cols
            )));
        }
        Ok(())
    }
}

/// A minibatch gradient over an embedding table: the dense gradient matrix
/// plus the set of rows the batch actually touched. Rows outside `sampled`
/// must be exactly zero; the constructor enforces this so steppers can
/// branch on membership rather than on floating-point comparisons.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    gradient: DenseMatrix,
    sampled: BTreeSet<usize>,
}

impl BatchGradient {
    pub fn new(gradient: DenseMatrix, sampled: BTreeSet<usize>) -> Result<Self> {
        if let Some(&bad) = sampled.iter().find(|&&i| i >= gradient.rows()) {
            return Err(SevoError::Validation(format!(
                "sampled row {bad} out of range for {} rows",
                gradient.rows()
            )));
        }
        for i in 0..gradient.rows() {
            if !sampled.contains(&i) && gradient.row(i).iter().any(|&v| v != 0.0) {
                return Err(SevoError::Validation(format!(
                    "row {i} has nonzero gradient but is not in the sampled set"
                )));
            }
        }
        Ok(BatchGradient { gradient, sampled })
    }

    /// Gradient that touches every row (full-batch or dense-model case).
    pub fn dense(gradient: DenseMatrix) -> Self {
        let sampled = (0..gradient.rows()).collect();
        BatchGradient { gradient, sampled }
    }

    pub fn gradient(&self) -> &DenseMatrix {
        &self.gradient
    }

    pub fn sampled(&self) -> &BTreeSet<usize> {
        &self.sampled
    }
}

/// An embedding matrix bundled with any scalar parameters updated alongside
/// it by plain dense steps.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub embeddings: DenseMatrix,
    pub dense_params: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(embeddings: DenseMatrix) -> Self {
        EmbeddingTable {
            embeddings,
            dense_params: Vec::new(),
        }
    }
}

/// What a step did: the raw update matrix before smoothing and the smoothed
/// matrix that was applied. Exposed so callers can trace smoothness of both.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub raw_delta: DenseMatrix,
    pub smoothed_delta: DenseMatrix,
}

fn check_step_inputs(
    table: &EmbeddingTable,
    grad: &BatchGradient,
    state: &OptimizerState,
    config: &OptimizerConfig,
    graph: &SparseGraph,
) -> Result<()> {
    config.validate()?;
    let (rows, cols) = (table.embeddings.rows(), table.embeddings.cols());
    if grad.gradient.rows() != rows || grad.gradient.cols() != cols {
        return Err(SevoError::ShapeMismatch(format!(
            "gradient is {}x{}, embeddings are {}x{}",
            grad.gradient.rows(),
            grad.gradient.cols(),
            rows,
            cols
        )));
    }
    state.check_shape(rows, cols)?;
    if graph.n_nodes() != rows {
        return Err(SevoError::ShapeMismatch(format!(
            "graph has {} nodes, embeddings have {} rows",
            graph.n_nodes(),
            rows
        )));
    }
    if !grad.gradient.all_finite() {
        return Err(SevoError::Numerical(
            "gradient contains non-finite values".into(),
        ));
    }
    Ok(())
}

fn pow_u(base: f64, exp: u64) -> f64 {
    if exp <= i32::MAX as u64 {
        base.powi(exp as i32)
    } else {
        base.powf(exp as f64)
    }
}

/// AdamW with decoupled weight decay and smoothed updates.
///
/// Sampled rows take the usual moment update from the raw gradient. Idle
/// rows follow the configured idle policy (see the module docs). The raw
/// update is the full bias-corrected matrix `Mhat / sqrt(Vhat + eps)`; it is
/// smoothed as a whole, and decay `eta lambda E` uses the pre-step
/// embeddings for every row.
pub fn step_adamw(
    table: &mut EmbeddingTable,
    grad: &BatchGradient,
    state: &mut OptimizerState,
    config: &OptimizerConfig,
    graph: &SparseGraph,
) -> Result<StepTrace> {
    check_step_inputs(table, grad, state, config, graph)?;
    let (rows, cols) = (table.embeddings.rows(), table.embeddings.cols());
    let t = state.step + 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let mut in_batch = vec![false; rows];
    for &i in &grad.sampled {
        in_batch[i] = true;
    }
    // Idle-compensation factors keep m/(1-b1^t), v/(1-b2^t) constant: with
    // m_t = (b + (1-b)/(1-b^{t-1})) m_{t-1} the ratio telescopes exactly.
    let idle_factors = if config.moment_correction && t >= 2 {
        Some((
            b1 + (1.0 - b1) / (1.0 - pow_u(b1, t - 1)),
            b2 + (1.0 - b2) / (1.0 - pow_u(b2, t - 1)),
        ))
    } else {
        None
    };
    for i in 0..rows {
        let m = state.first_moment.row_mut(i);
        if in_batch[i] {
            for (mv, gv) in m.iter_mut().zip(grad.gradient.row(i)) {
                *mv = b1 * *mv + (1.0 - b1) * gv;
            }
        } else {
            let f = idle_factors.map(|(fm, _)| fm).unwrap_or(b1);
            for mv in m.iter_mut() {
                *mv *= f;
            }
        }
        let v = state.second_moment.row_mut(i);
        if in_batch[i] {
            for (vv, gv) in v.iter_mut().zip(grad.gradient.row(i)) {
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            }
        } else {
            let f = idle_factors.map(|(_, fv)| fv).unwrap_or(b2);
            for vv in v.iter_mut() {
                *vv *= f;
            }
        }
    }
    let bias1 = 1.0 - pow_u(b1, t);
    let bias2 = 1.0 - pow_u(b2, t);
    let mut raw = DenseMatrix::zeros(rows, cols);
    for idx in 0..rows * cols {
        let mhat = state.first_moment.data()[idx] / bias1;
        let vhat = state.second_moment.data()[idx] / bias2;
        raw.data_mut()[idx] = mhat / (vhat + config.epsilon).sqrt();
    }
    let smoothed = transform(&raw, graph, &config.sevo)?;
    if !smoothed.all_finite() {
        return Err(SevoError::Numerical(
            "smoothed update contains non-finite values".into(),
        ));
    }
    let (eta, lambda) = (config.learning_rate, config.weight_decay);
    for (e, s) in table
        .embeddings
        .data_mut()
        .iter_mut()
        .zip(smoothed.data())
    {
        // Decay reads the pre-step value of *e; both terms apply at once.
        *e = *e - eta * s - eta * lambda * *e;
    }
    state.step = t;
    Ok(StepTrace {
        raw_delta: raw,
        smoothed_delta: smoothed,
    })
}

/// Adam with coupled weight decay (`G = grad + lambda E`) and smoothed
/// updates. Because the decay term is dense, first and second moments are
/// maintained for every row on every step; the sampled set is not consulted.
pub fn step_adam(
    table: &mut EmbeddingTable,
    grad: &BatchGradient,
    state: &mut OptimizerState,
    config: &OptimizerConfig,
    graph: &SparseGraph,
) -> Result<StepTrace> {
    check_step_inputs(table, grad, state, config, graph)?;
    let (rows, cols) = (table.embeddings.rows(), table.embeddings.cols());
    let t = state.step + 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let lambda = config.weight_decay;
    for idx in 0..rows * cols {
        let g = grad.gradient.data()[idx] + lambda * table.embeddings.data()[idx];
        let m = &mut state.first_moment.data_mut()[idx];
        *m = b1 * *m + (1.0 - b1) * g;
        let v = &mut state.second_moment.data_mut()[idx];
        *v = b2 * *v + (1.0 - b2) * g * g;
    }
    let bias1 = 1.0 - pow_u(b1, t);
    let bias2 = 1.0 - pow_u(b2, t);
    let mut raw = DenseMatrix::zeros(rows, cols);
    for idx in 0..rows * cols {
        let mhat = state.first_moment.data()[idx] / bias1;
        let vhat = state.second_moment.data()[idx] / bias2;
        raw.data_mut()[idx] = mhat / (vhat + config.epsilon).sqrt();
    }
    let smoothed = transform(&raw, graph, &config.sevo)?;
    if !smoothed.all_finite() {
        return Err(SevoError::Numerical(
            "smoothed update contains non-finite values".into(),
        ));
    }
    table.embeddings.axpy(-config.learning_rate, &smoothed)?;
    state.step = t;
    Ok(StepTrace {
        raw_delta: raw,
        smoothed_delta: smoothed,
    })
}

/// Momentum SGD with coupled weight decay and smoothed updates. The momentum
/// buffer is the raw update; the sampled set is not consulted because the
/// decay term is dense.
pub fn step_sgd(
    table: &mut EmbeddingTable,
    grad: &BatchGradient,
    state: &mut OptimizerState,
    config: &OptimizerConfig,
    graph: &SparseGraph,
) -> Result<StepTrace> {
    check_step_inputs(table, grad, state, config, graph)?;
    let lambda = config.weight_decay;
    let mu = config.momentum;
    for idx in 0..table.embeddings.data().len() {
        let g = grad.gradient.data()[idx] + lambda * table.embeddings.data()[idx];
        let m = &mut state.first_moment.data_mut()[idx];
        *m = mu * *m + g;
    }
    let raw = state.first_moment.clone();
    let smoothed = transform(&raw, graph, &config.sevo)?;
    if !smoothed.all_finite() {
        return Err(SevoError::Numerical(
            "smoothed update contains non-finite values".into(),
        ));
    }
    table.embeddings.axpy(-config.learning_rate, &smoothed)?;
    state.step += 1;
    Ok(StepTrace {
        raw_delta: raw,
        smoothed_delta: smoothed,
    })
}

/// Plain gradient step on dense (non-embedding) parameters:
/// `p -= dense_lr * g`. No smoothing, no momentum, no decay.
pub fn dense_param_step(params: &mut [f64], grad: &[f64], config: &OptimizerConfig) -> Result<()> {
    config.validate()?;
    if params.len() != grad.len() {
        return Err(SevoError::ShapeMismatch(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            grad.len()
        )));
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(SevoError::Numerical(
            "dense gradient contains non-finite values".into(),
        ));
    }
    let lr = config.dense_lr();
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
    Ok(())
}

const CHECKPOINT_FORMAT: &str = "sevo-optimizer-state";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config_sha256: String,
    step: u64,
    rows: usize,
    cols: usize,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

fn config_fingerprint(config: &OptimizerConfig) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

/// Serializes optimizer state as versioned JSON, embedding a fingerprint of
/// the optimizer config so a resume with different hyperparameters is
/// rejected instead of silently diverging.
pub fn save_checkpoint<W: Write>(
    mut writer: W,
    state: &OptimizerState,
    config: &OptimizerConfig,
) -> Result<()> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        config_sha256: config_fingerprint(config)?,
        step: state.step,
        rows: state.first_moment.rows(),
        cols: state.first_moment.cols(),
        first_moment: state.first_moment.data().to_vec(),
        second_moment: state.second_moment.data().to_vec(),
    };
    serde_json::to_writer(&mut writer, &file)?;
    writer.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`], verifying the format
/// marker, version, and config fingerprint.
pub fn load_checkpoint<R: Read>(reader: R, config: &OptimizerConfig) -> Result<OptimizerState> {
    let file: CheckpointFile = serde_json::from_reader(reader)?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(SevoError::Incompatible(format!(
            "not an optimizer checkpoint (format marker {:?})",
            file.format
        )));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(SevoError::Incompatible(format!(
            "checkpoint version {} is not supported (expected {})",
            file.version, CHECKPOINT_VERSION
        )));
    }
    let expected = config_fingerprint(config)?;
    if file.config_sha256 != expected {
        return Err(SevoError::Incompatible(
            "checkpoint was written under a different optimizer config".into(),
        ));
    }
    let first_moment = DenseMatrix::from_vec(file.rows, file.cols, file.first_moment)?;
    let second_moment = DenseMatrix::from_vec(file.rows, file.cols, file.second_moment)?;
    if !first_moment.all_finite() || !second_moment.all_finite() {
        return Err(SevoError::Numerical(
            "checkpoint contains non-finite moments".into(),
        ));
    }
    Ok(OptimizerState {
        first_moment,
        second_moment,
        step: file.step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparseGraph;
    use crate::sparse::CsrMatrix;
    use crate::transform::TransformVariant;
    use approx::assert_abs_diff_eq;

    fn pair_graph() -> SparseGraph {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        SparseGraph::normalize(a).unwrap()
    }

    fn smoothing_off() -> SEvoConfig {
        SEvoConfig {
            beta: 0.0,
            layers: 1,
            variant: TransformVariant::RescaledNeumann,
        }
    }

    fn grad_rows(rows: &[(usize, Vec<f64>)], n: usize, d: usize) -> BatchGradient {
        let mut g = DenseMatrix::zeros(n, d);
        let mut sampled = BTreeSet::new();
        for (i, row) in rows {
            g.row_mut(*i).copy_from_slice(row);
            sampled.insert(*i);
        }
        BatchGradient::new(g, sampled).unwrap()
    }

    #[test]
    fn batch_gradient_rejects_nonzero_unsampled_rows() {
        let mut g = DenseMatrix::zeros(3, 2);
        g.set(1, 0, 0.5);
        let err = BatchGradient::new(g, BTreeSet::from([0]));
        assert!(matches!(err, Err(SevoError::Validation(_))));
    }

    #[test]
    fn config_validation_rejects_bad_hyperparameters() {
        let mut cfg = OptimizerConfig::default();
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = OptimizerConfig::default();
        cfg.beta1 = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = OptimizerConfig::default();
        cfg.weight_decay = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = OptimizerConfig::default();
        cfg.sevo.beta = 1.0;
        assert!(cfg.validate().is_err());
        assert!(OptimizerConfig::default().validate().is_ok());
    }

    /// With correction enabled, the bias-corrected moments of an idle row
    /// are constant, so its raw update is identical across idle steps.
    #[test]
    fn corrected_idle_rows_produce_stationary_updates() {
        let g = pair_graph();
        let mut table = EmbeddingTable::new(DenseMatrix::from_vec(2, 2, vec![0.1; 4]).unwrap());
        let mut state = OptimizerState::new(2, 2);
        let mut cfg = OptimizerConfig::default();
        cfg.sevo = smoothing_off();
        cfg.moment_correction = true;
        // Warm up: both rows sampled once.
        let warm = grad_rows(&[(0, vec![0.3, -0.2]), (1, vec![0.1, 0.4])], 2, 2);
        step_adamw(&mut table, &warm, &mut state, &cfg, &g).unwrap();
        // Row 1 goes idle; its raw update must stay fixed for 50 steps.
        let idle = grad_rows(&[(0, vec![0.05, 0.02])], 2, 2);
        let first = step_adamw(&mut table, &idle, &mut state, &cfg, &g).unwrap();
        let reference: Vec<f64> = first.raw_delta.row(1).to_vec();
        for _ in 0..49 {
            let trace = step_adamw(&mut table, &idle, &mut state, &cfg, &g).unwrap();
            for (a, b) in trace.raw_delta.row(1).iter().zip(&reference) {
                let rel = (a - b).abs() / b.abs().max(1e-300);
                assert!(rel < 1e-9, "idle update drifted by {rel}");
            }
        }
    }

    /// Without correction, an idle row's update shrinks geometrically by
    /// `kappa beta1^p / sqrt(beta2^p)` over a gap of length p, where kappa
    /// is the ratio of bias corrections. Verified against the closed form
    /// with a tiny epsilon so the denominator floor is negligible.
    #[test]
    fn uncorrected_idle_updates_follow_the_decay_law() {
        let g = pair_graph();
        let mut table = EmbeddingTable::new(DenseMatrix::from_vec(2, 2, vec![0.1; 4]).unwrap());
        let mut state = OptimizerState::new(2, 2);
        let mut cfg = OptimizerConfig::default();
        cfg.sevo = smoothing_off();
        cfg.moment_correction = false;
        cfg.epsilon = 1e-30;
        let warm = grad_rows(&[(0, vec![0.3, -0.2]), (1, vec![0.1, 0.4])], 2, 2);
        let warm_trace = step_adamw(&mut table, &warm, &mut state, &cfg, &g).unwrap();
        let at_t: Vec<f64> = warm_trace.raw_delta.row(1).to_vec();
        let t = 1u64;
        let idle = grad_rows(&[(0, vec![0.05, 0.02])], 2, 2);
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let mut last = at_t.clone();
        for p in 1..=50u64 {
            let trace = step_adamw(&mut table, &idle, &mut state, &cfg, &g).unwrap();
            last = trace.raw_delta.row(1).to_vec();
            let _ = p;
            let kappa = ((1.0 - b1.powi(t as i32)) / (1.0 - b1.powi((t + p) as i32)))
                * ((1.0 - b2.powi((t + p) as i32)).sqrt() / (1.0 - b2.powi(t as i32)).sqrt());
            let factor = kappa * b1.powi(p as i32) / b2.powi(p as i32).sqrt();
            for (now, base) in last.iter().zip(&at_t) {
                let expected = factor * base;
                let rel = (now - expected).abs() / expected.abs().max(1e-300);
                assert!(rel < 1e-9, "p = {p}: relative error {rel}");
            }
        }
        assert!(last[0].abs() < at_t[0].abs());
    }

    #[test]
    fn adamw_decay_is_decoupled_and_uses_pre_step_embeddings() {
        // With a zero gradient, no smoothing, correction off, and moments at
        // zero, the whole step is E <- E - eta lambda E.
        let g = SparseGraph::isolated(2);
        let mut table =
            EmbeddingTable::new(DenseMatrix::from_vec(2, 1, vec![1.0, -2.0]).unwrap());
        let mut state = OptimizerState::new(2, 1);
        let mut cfg = OptimizerConfig::default();
        cfg.sevo = smoothing_off();
        cfg.moment_correction = false;
        cfg.weight_decay = 0.5;
        cfg.learning_rate = 0.1;
        let zero = BatchGradient::new(DenseMatrix::zeros(2, 1), BTreeSet::new()).unwrap();
        step_adamw(&mut table, &zero, &mut state, &cfg, &g).unwrap();
        assert_abs_diff_eq!(table.embeddings.get(0, 0), 1.0 * (1.0 - 0.05), epsilon = 1e-15);
        assert_abs_diff_eq!(table.embeddings.get(1, 0), -2.0 * (1.0 - 0.05), epsilon = 1e-15);
    }

    #[test]
    fn sgd_momentum_accumulates_coupled_decay() {
        // lambda = 0.5, mu = 1: M after two zero-gradient steps holds the
        // decay terms of both pre-step embedding values.
        let g = SparseGraph::isolated(1);
        let mut table = EmbeddingTable::new(DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap());
        let mut state = OptimizerState::new(1, 1);
        let mut cfg = OptimizerConfig::default();
        cfg.sevo = smoothing_off();
        cfg.momentum = 1.0;
        cfg.weight_decay = 0.5;
        cfg.learning_rate = 0.1;
        let zero = BatchGradient::new(DenseMatrix::zeros(1, 1), BTreeSet::new()).unwrap();
        // Step 1: G = 0.5, M = 0.5, E = 1 - 0.05 = 0.95.
        step_sgd(&mut table, &zero, &mut state, &cfg, &g).unwrap();
        assert_abs_diff_eq!(table.embeddings.get(0, 0), 0.95, epsilon = 1e-15);
        // Step 2: G = 0.475, M = 0.975, E = 0.95 - 0.0975 = 0.8525.
        step_sgd(&mut table, &zero, &mut state, &cfg, &g).unwrap();
        assert_abs_diff_eq!(table.embeddings.get(0, 0), 0.8525, epsilon = 1e-15);
        assert_eq!(state.step_count(), 2);
    }

    #[test]
    fn steps_reject_shape_and_finiteness_violations() {
        let g = pair_graph();
        let mut table = EmbeddingTable::new(DenseMatrix::zeros(2, 2));
        let mut state = OptimizerState::new(2, 2);
        let cfg = OptimizerConfig::default();
        let wrong_shape = BatchGradient::dense(DenseMatrix::zeros(3, 2));
        assert!(matches!(
            step_adamw(&mut table, &wrong_shape, &mut state, &cfg, &g),
            Err(SevoError::ShapeMismatch(_))
        ));
        let mut bad = DenseMatrix::zeros(2, 2);
        bad.set(0, 0, f64::INFINITY);
        let bad = BatchGradient::dense(bad);
        assert!(matches!(
            step_adam(&mut table, &bad, &mut state, &cfg, &g),
            Err(SevoError::Numerical(_))
        ));
        let wrong_graph = SparseGraph::isolated(5);
        let ok = BatchGradient::dense(DenseMatrix::zeros(2, 2));
        assert!(matches!(
            step_sgd(&mut table, &ok, &mut state, &cfg, &wrong_graph),
            Err(SevoError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn dense_param_step_uses_its_own_learning_rate() {
        let mut cfg = OptimizerConfig::default();
        cfg.learning_rate = 1.0;
        cfg.dense_learning_rate = Some(0.5);
        let mut params = vec![1.0, 2.0];
        dense_param_step(&mut params, &[1.0, -1.0], &cfg).unwrap();
        assert_eq!(params, vec![0.5, 2.5]);
        assert!(dense_param_step(&mut params, &[1.0], &cfg).is_err());
        assert!(dense_param_step(&mut params, &[f64::NAN, 0.0], &cfg).is_err());
    }

    #[test]
    fn checkpoint_round_trips_and_rejects_mismatches() {
        let g = pair_graph();
        let mut table = EmbeddingTable::new(DenseMatrix::from_vec(2, 2, vec![0.1; 4]).unwrap());
        let mut state = OptimizerState::new(2, 2);
        let cfg = OptimizerConfig::default();
        let batch = grad_rows(&[(0, vec![0.3, -0.2])], 2, 2);
        step_adamw(&mut table, &batch, &mut state, &cfg, &g).unwrap();
        step_adamw(&mut table, &batch, &mut state, &cfg, &g).unwrap();

        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &state, &cfg).unwrap();
        let restored = load_checkpoint(buf.as_slice(), &cfg).unwrap();
        assert_eq!(restored.step_count(), 2);
        assert_eq!(restored.first_moment(), state.first_moment());
        assert_eq!(restored.second_moment(), state.second_moment());

        // Resuming under different hyperparameters must be refused.
        let mut other = cfg.clone();
        other.learning_rate = 0.5;
        assert!(matches!(
            load_checkpoint(buf.as_slice(), &other),
            Err(SevoError::Incompatible(_))
        ));

        // Resumed and uninterrupted runs agree exactly.
        let mut resumed_table = table.clone();
        let mut resumed_state = restored;
        let mut straight_table = table.clone();
        let mut straight_state = state.clone();
        for _ in 0..3 {
            step_adamw(&mut resumed_table, &batch, &mut resumed_state, &cfg, &g).unwrap();
            step_adamw(&mut straight_table, &batch, &mut straight_state, &cfg, &g).unwrap();
        }
        assert_eq!(resumed_table.embeddings, straight_table.embeddings);
    }

    #[test]
    fn checkpoint_rejects_foreign_files() {
        let cfg = OptimizerConfig::default();
        let garbage = br#"{"format": "something-else", "version": 1, "config_sha256": "x",
            "step": 0, "rows": 0, "cols": 0, "first_moment": [], "second_moment": []}"#;
        assert!(matches!(
            load_checkpoint(garbage.as_slice(), &cfg),
            Err(SevoError::Incompatible(_))
        ));
        assert!(load_checkpoint(b"not json".as_slice(), &cfg).is_err());
    }
}
