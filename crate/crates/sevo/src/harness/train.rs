//! BPR training loop over a matrix-factorization model.
//!
//! Item embeddings are stepped through the configured smoothing optimizer
//! over the item graph. User embeddings go through the same optimizer with
//! smoothing disabled (an isolated graph and `beta = 0`), so arms that
//! differ only in the item-side smoothing config remain comparable.
//!
//! Determinism: one seeded RNG drives initialization, epoch shuffling, and
//! negative sampling in a fixed order; items are stepped before users in
//! every batch.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SevoError};
use crate::graph::SparseGraph;
use crate::harness::bpr::{bpr_gradients, sample_negative, BprTriple};
use crate::harness::eval::{evaluate, EvalConfig, EvalOutcome, MetricValue};
use crate::harness::model::MfModel;
use crate::harness::split::{EvalSplit, Holdout, UserIndex};
use crate::optim::{
    step_adam, step_adamw, step_sgd, BatchGradient, EmbeddingTable, OptimizerConfig,
    OptimizerState, StepTrace,
};
use crate::transform::{smoothness, smoothness_gradient};

/// Which stepper drives both embedding tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdamW,
}

/// Training-run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub dimension: usize,
    pub init_std: f64,
    pub seed: u64,
    pub algorithm: OptimizerKind,
    pub optimizer: OptimizerConfig,
    /// Weight of the explicit smoothness regularizer on item embeddings;
    /// zero disables it.
    pub smoothness_weight: f64,
    pub eval: EvalConfig,
    /// Run validation evaluation every this many epochs; zero disables it.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            dimension: 32,
            init_std: 0.02,
            seed: 42,
            algorithm: OptimizerKind::AdamW,
            optimizer: OptimizerConfig::default(),
            smoothness_weight: 0.0,
            eval: EvalConfig::default(),
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(SevoError::Validation("batch_size must be >= 1".into()));
        }
        if self.dimension == 0 {
            return Err(SevoError::Validation("dimension must be >= 1".into()));
        }
        if !(self.init_std > 0.0) || !self.init_std.is_finite() {
            return Err(SevoError::Validation(format!(
                "init_std must be positive and finite, got {}",
                self.init_std
            )));
        }
        if !self.smoothness_weight.is_finite() || self.smoothness_weight < 0.0 {
            return Err(SevoError::Validation(format!(
                "smoothness_weight must be non-negative, got {}",
                self.smoothness_weight
            )));
        }
        self.optimizer.validate()?;
        self.eval.validate()
    }
}

/// Per-epoch measurements. Update smoothness values are means over the
/// epoch's item-table steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Smoothness of the item embedding matrix at epoch end.
    pub embedding_smoothness: f64,
    pub mean_raw_update_smoothness: f64,
    pub mean_smoothed_update_smoothness: f64,
    pub valid_metrics: Option<Vec<MetricValue>>,
}

/// Final model plus everything measured along the way.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MfModel,
    pub user_index: UserIndex,
    pub epochs: Vec<EpochTrace>,
    pub test_metrics: EvalOutcome,
    pub final_embedding_smoothness: f64,
    pub steps_taken: u64,
    /// Final optimizer state of the item table, for checkpointing.
    pub item_state: OptimizerState,
}

fn step_table(
    kind: OptimizerKind,
    table: &mut EmbeddingTable,
    grad: &BatchGradient,
    state: &mut OptimizerState,
    config: &OptimizerConfig,
    graph: &SparseGraph,
) -> Result<StepTrace> {
    match kind {
        OptimizerKind::Sgd => step_sgd(table, grad, state, config, graph),
        OptimizerKind::Adam => step_adam(table, grad, state, config, graph),
        OptimizerKind::AdamW => step_adamw(table, grad, state, config, graph),
    }
}

/// Trains the model on `split.train` with the item graph and returns the
/// final model, per-epoch traces, and test metrics.
pub fn train(split: &EvalSplit, graph: &SparseGraph, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n_items = split.train.n_items();
    if graph.n_nodes() != n_items {
        return Err(SevoError::ShapeMismatch(format!(
            "graph has {} nodes but the split has {} items",
            graph.n_nodes(),
            n_items
        )));
    }
    let user_index = UserIndex::from_log(&split.train);
    let n_users = user_index.len();
    if n_users == 0 {
        return Err(SevoError::Validation("no users to train on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = MfModel::init(n_users, n_items, config.dimension, config.init_std, &mut rng)?;
    let mut user_table = EmbeddingTable::new(init.user_embeddings);
    let mut item_table = init.item_embeddings;
    let mut item_state = OptimizerState::new(n_items, config.dimension);
    let mut user_state = OptimizerState::new(n_users, config.dimension);
    // Users get the same stepper with smoothing disabled.
    let mut user_opt = config.optimizer.clone();
    user_opt.sevo.beta = 0.0;
    let user_graph = SparseGraph::isolated(n_users);

    // (user row, positive item) pairs in a fixed base order; per-user train
    // sets for negative-sampling rejection.
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut train_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_users];
    for (&user, seq) in split.train.sequences() {
        let row = user_index.row(user).expect("index covers train users");
        for &item in seq {
            pairs.push((row, item));
            train_sets[row].insert(item);
        }
    }

    let snapshot = |user_table: &EmbeddingTable, item_table: &EmbeddingTable| MfModel {
        user_embeddings: user_table.embeddings.clone(),
        item_embeddings: EmbeddingTable::new(item_table.embeddings.clone()),
        dimension: config.dimension,
    };

    let mut epochs = Vec::with_capacity(config.epochs);
    // Norms of the most recent item update, raw and smoothed, kept for the
    // diagnostic attached to a non-finite-loss abort.
    let mut last_delta_norms: Option<(f64, f64)> = None;
    for epoch in 1..=config.epochs {
        pairs.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut raw_smooth_sum = 0.0f64;
        let mut smoothed_smooth_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in pairs.chunks(config.batch_size) {
            let mut triples = Vec::with_capacity(chunk.len());
            for &(row, positive) in chunk {
                let negative = sample_negative(&train_sets[row], n_items, &mut rng)?;
                triples.push(BprTriple {
                    user: row,
                    positive,
                    negative,
                });
            }
            let grads = bpr_gradients(&user_table.embeddings, &item_table.embeddings, &triples)?;
            if !grads.loss.is_finite() {
                let dump = match last_delta_norms {
                    Some((raw, smoothed)) => format!(
                        "last update norms: |raw delta| = {raw:.6e}, \
                         |smoothed delta| = {smoothed:.6e}"
                    ),
                    None => "no completed update step yet".to_string(),
                };
                return Err(SevoError::Numerical(format!(
                    "BPR loss became non-finite at epoch {epoch} after {} steps; {dump}",
                    item_state.step_count()
                )));
            }
            let item_grad = if config.smoothness_weight > 0.0 {
                let reg = smoothness_gradient(
                    &item_table.embeddings,
                    graph,
                    config.smoothness_weight,
                )?;
                let mut combined = grads.item_grad.gradient().clone();
                combined.axpy(1.0, &reg)?;
                BatchGradient::dense(combined)
            } else {
                grads.item_grad
            };
            let item_trace = step_table(
                config.algorithm,
                &mut item_table,
                &item_grad,
                &mut item_state,
                &config.optimizer,
                graph,
            )
            .map_err(|e| match e {
                SevoError::Numerical(msg) => SevoError::Numerical(format!(
                    "{msg} (epoch {epoch}, step {})",
                    item_state.step_count() + 1
                )),
                other => other,
            })?;
            step_table(
                config.algorithm,
                &mut user_table,
                &grads.user_grad,
                &mut user_state,
                &user_opt,
                &user_graph,
            )?;
            loss_sum += grads.loss;
            last_delta_norms = Some((
                item_trace.raw_delta.frobenius_norm(),
                item_trace.smoothed_delta.frobenius_norm(),
            ));
            raw_smooth_sum += smoothness(&item_trace.raw_delta, graph)?;
            smoothed_smooth_sum += smoothness(&item_trace.smoothed_delta, graph)?;
            batches += 1;
        }
        let denom = batches.max(1) as f64;
        let valid_metrics = if config.eval_every > 0 && epoch % config.eval_every == 0 {
            let snap = snapshot(&user_table, &item_table);
            Some(
                evaluate(&snap, split, &user_index, Holdout::Valid, &config.eval)?
                    .metrics,
            )
        } else {
            None
        };
        epochs.push(EpochTrace {
            epoch,
            mean_loss: loss_sum / denom,
            embedding_smoothness: smoothness(&item_table.embeddings, graph)?,
            mean_raw_update_smoothness: raw_smooth_sum / denom,
            mean_smoothed_update_smoothness: smoothed_smooth_sum / denom,
            valid_metrics,
        });
    }

    let final_embedding_smoothness = smoothness(&item_table.embeddings, graph)?;
    let steps_taken = item_state.step_count();
    let model = MfModel {
        user_embeddings: user_table.embeddings,
        item_embeddings: item_table,
        dimension: config.dimension,
    };
    let test_metrics = evaluate(&model, split, &user_index, Holdout::Test, &config.eval)?;
    Ok(TrainOutcome {
        model,
        user_index,
        epochs,
        test_metrics,
        final_embedding_smoothness,
        steps_taken,
        item_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_from_sequences, SimilarityConfig};
    use crate::harness::split::leave_one_out;
    use crate::harness::synthetic::{generate_synthetic, SyntheticSpec};

    fn small_setup() -> (EvalSplit, SparseGraph) {
        let spec = SyntheticSpec {
            n_items: 30,
            n_users: 40,
            n_clusters: 3,
            seq_len: 8,
            intra_cluster_prob: 0.9,
            seed: 5,
        };
        let (log, _) = generate_synthetic(&spec).unwrap();
        let split = leave_one_out(&log).unwrap();
        let graph = build_from_sequences(&split.train, &SimilarityConfig::default()).unwrap();
        (split, graph)
    }

    fn quick_config(epochs: usize) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.epochs = epochs;
        cfg.batch_size = 64;
        cfg.dimension = 8;
        cfg.optimizer.learning_rate = 0.01;
        cfg
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (split, graph) = small_setup();
        let cfg = quick_config(2);
        let a = train(&split, &graph, &cfg).unwrap();
        let b = train(&split, &graph, &cfg).unwrap();
        assert_eq!(a.model.item_embeddings.embeddings, b.model.item_embeddings.embeddings);
        assert_eq!(a.model.user_embeddings, b.model.user_embeddings);
        assert_eq!(
            a.epochs.last().unwrap().mean_loss,
            b.epochs.last().unwrap().mean_loss
        );
        let mut other = cfg.clone();
        other.seed = 43;
        let c = train(&split, &graph, &other).unwrap();
        assert_ne!(a.model.item_embeddings.embeddings, c.model.item_embeddings.embeddings);
    }

    #[test]
    fn loss_decreases_over_training() {
        let (split, graph) = small_setup();
        let out = train(&split, &graph, &quick_config(8)).unwrap();
        let first = out.epochs.first().unwrap().mean_loss;
        let last = out.epochs.last().unwrap().mean_loss;
        assert!(
            last < first,
            "loss did not improve: {first} -> {last}"
        );
        assert_eq!(out.epochs.len(), 8);
        assert!(out.steps_taken > 0);
    }

    #[test]
    fn graph_and_split_sizes_must_agree() {
        let (split, _) = small_setup();
        let wrong = SparseGraph::isolated(split.train.n_items() + 1);
        assert!(matches!(
            train(&split, &wrong, &quick_config(1)),
            Err(SevoError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn periodic_validation_lands_on_the_requested_epochs() {
        let (split, graph) = small_setup();
        let mut cfg = quick_config(4);
        cfg.eval_every = 2;
        let out = train(&split, &graph, &cfg).unwrap();
        let with_metrics: Vec<usize> = out
            .epochs
            .iter()
            .filter(|e| e.valid_metrics.is_some())
            .map(|e| e.epoch)
            .collect();
        assert_eq!(with_metrics, vec![2, 4]);
    }

    #[test]
    fn smoothing_lowers_embedding_smoothness() {
        let (split, graph) = small_setup();
        let mut base = quick_config(6);
        base.optimizer.sevo.beta = 0.0;
        let mut smooth = quick_config(6);
        smooth.optimizer.sevo.beta = 0.99;
        let out_base = train(&split, &graph, &base).unwrap();
        let out_smooth = train(&split, &graph, &smooth).unwrap();
        assert!(
            out_smooth.final_embedding_smoothness < out_base.final_embedding_smoothness,
            "smoothed {} vs baseline {}",
            out_smooth.final_embedding_smoothness,
            out_base.final_embedding_smoothness
        );
    }

    #[test]
    fn explicit_regularizer_also_lowers_smoothness() {
        let (split, graph) = small_setup();
        let mut base = quick_config(6);
        base.optimizer.sevo.beta = 0.0;
        let mut reg = quick_config(6);
        reg.optimizer.sevo.beta = 0.0;
        reg.smoothness_weight = 0.05;
        let out_base = train(&split, &graph, &base).unwrap();
        let out_reg = train(&split, &graph, &reg).unwrap();
        assert!(out_reg.final_embedding_smoothness < out_base.final_embedding_smoothness);
    }

    #[test]
    fn all_optimizer_kinds_run() {
        let (split, graph) = small_setup();
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::AdamW] {
            let mut cfg = quick_config(1);
            cfg.algorithm = kind;
            if kind == OptimizerKind::Sgd {
                cfg.optimizer.learning_rate = 0.05;
            }
            let out = train(&split, &graph, &cfg).unwrap();
            assert!(out.epochs[0].mean_loss.is_finite());
        }
    }
}
