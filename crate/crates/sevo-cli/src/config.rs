//! TOML run configuration.
//!
//! One file drives every subcommand; each command reads the sections it
//! needs and ignores the rest. Every field has a default, so a config
//! may name only what it changes. Unknown keys are rejected to catch
//! typos before any work starts.
//!
//! Smoothing parameters live in the single `[sevo]` section; commands
//! that need a full optimizer configuration splice it in, so a sweep
//! over `beta` touches one key.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use sevo::graph::SimilarityConfig;
use sevo::harness::{EvalConfig, OptimizerKind, QuadraticConfig, TrainConfig};
use sevo::optim::OptimizerConfig;
use sevo::transform::{SEvoConfig, TransformVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Seed,
    pub input: InputSection,
    pub synthetic: SyntheticSection,
    pub similarity: SimilarityConfig,
    pub sevo: SEvoConfig,
    pub optimizer: OptimizerSection,
    pub train: TrainSection,
    pub bench: BenchSection,
}

/// Newtype so the top-level `seed` key keeps a visible default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Default for Seed {
    fn default() -> Self {
        Seed(42)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// Tab-separated `user item timestamp` interaction log.
    pub interactions: Option<PathBuf>,
    /// Graph triplet file produced by `build-graph`.
    pub graph: Option<PathBuf>,
    /// Users with fewer interactions are dropped before splitting.
    pub min_sequence_length: MinSeqLen,
}

/// Leave-one-out needs two held-out interactions plus one for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MinSeqLen(pub usize);

impl Default for MinSeqLen {
    fn default() -> Self {
        MinSeqLen(3)
    }
}

/// Mirrors the synthetic generator's knobs minus its seed, which the
/// top-level `seed` provides so one override steers the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_items: usize,
    pub n_users: usize,
    pub n_clusters: usize,
    pub seq_len: usize,
    pub intra_cluster_prob: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            n_items: 200,
            n_users: 500,
            n_clusters: 10,
            seq_len: 20,
            intra_cluster_prob: 0.9,
        }
    }
}

/// Optimizer scalars; the `[sevo]` section supplies the smoothing part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
    pub moment_correction: bool,
    pub dense_learning_rate: Option<f64>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let lib = OptimizerConfig::default();
        OptimizerSection {
            learning_rate: lib.learning_rate,
            beta1: lib.beta1,
            beta2: lib.beta2,
            momentum: lib.momentum,
            weight_decay: lib.weight_decay,
            epsilon: lib.epsilon,
            moment_correction: lib.moment_correction,
            dense_learning_rate: lib.dense_learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub dimension: usize,
    pub init_std: f64,
    pub algorithm: OptimizerKind,
    pub smoothness_weight: f64,
    pub eval_every: usize,
    pub cutoffs: Vec<usize>,
    pub mask_train_items: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let lib = TrainConfig::default();
        TrainSection {
            epochs: lib.epochs,
            batch_size: lib.batch_size,
            dimension: lib.dimension,
            init_std: lib.init_std,
            algorithm: lib.algorithm,
            smoothness_weight: lib.smoothness_weight,
            eval_every: lib.eval_every,
            cutoffs: lib.eval.cutoffs,
            mask_train_items: lib.eval.mask_train_items,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub dimension: usize,
    pub dense_dim: usize,
    pub learning_rate: f64,
    pub dense_learning_rate: f64,
    pub relative_threshold: f64,
    pub max_steps: usize,
    /// Operators benchmarked side by side on the same problem.
    pub variants: Vec<TransformVariant>,
}

impl Default for BenchSection {
    fn default() -> Self {
        let lib = QuadraticConfig::default();
        BenchSection {
            dimension: lib.dimension,
            dense_dim: lib.dense_dim,
            learning_rate: lib.learning_rate,
            dense_learning_rate: lib.dense_learning_rate,
            relative_threshold: lib.relative_threshold,
            max_steps: lib.max_steps,
            variants: vec![TransformVariant::RescaledNeumann, TransformVariant::Neumann],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Assembles the library optimizer config from the scalar section and
    /// the shared `[sevo]` section.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.optimizer.learning_rate,
            beta1: self.optimizer.beta1,
            beta2: self.optimizer.beta2,
            momentum: self.optimizer.momentum,
            weight_decay: self.optimizer.weight_decay,
            epsilon: self.optimizer.epsilon,
            moment_correction: self.optimizer.moment_correction,
            dense_learning_rate: self.optimizer.dense_learning_rate,
            sevo: self.sevo,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            dimension: self.train.dimension,
            init_std: self.train.init_std,
            seed: self.seed.0,
            algorithm: self.train.algorithm,
            optimizer: self.optimizer_config(),
            smoothness_weight: self.train.smoothness_weight,
            eval: EvalConfig {
                cutoffs: self.train.cutoffs.clone(),
                mask_train_items: self.train.mask_train_items,
            },
            eval_every: self.train.eval_every,
        }
    }

    pub fn quadratic_config(&self, variant: TransformVariant) -> QuadraticConfig {
        QuadraticConfig {
            dimension: self.bench.dimension,
            dense_dim: self.bench.dense_dim,
            seed: self.seed.0,
            learning_rate: self.bench.learning_rate,
            dense_learning_rate: self.bench.dense_learning_rate,
            relative_threshold: self.bench.relative_threshold,
            max_steps: self.bench.max_steps,
            sevo: SEvoConfig {
                variant,
                ..self.sevo
            },
        }
    }
}
