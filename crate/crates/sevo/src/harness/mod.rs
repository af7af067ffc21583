//! Desk-scale training and evaluation harness.
//!
//! A deliberately small matrix-factorization recommender drives the
//! optimizers end to end: leave-one-out splits, BPR training with negative
//! sampling, HR/NDCG evaluation, a synthetic clustered dataset generator,
//! and a quadratic benchmark that measures iteration counts to a target
//! loss. Everything is seeded and deterministic for a fixed seed and thread
//! count.

mod bpr;
mod eval;
mod model;
mod quadratic;
mod split;
mod synthetic;
mod train;

pub use bpr::{bpr_gradients, bpr_loss, sample_negative, BprGradients, BprTriple};
pub use eval::{evaluate, EvalConfig, EvalOutcome, Metric, MetricValue};
pub use model::MfModel;
pub use quadratic::{quadratic_benchmark, BenchOutcome, BenchStatus, QuadraticConfig};
pub use split::{leave_one_out, EvalSplit, Holdout, UserIndex};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use train::{train, EpochTrace, OptimizerKind, TrainConfig, TrainOutcome};
