//! Structure-aware embedding evolution for sparse-gradient training.
//!
//! Embedding tables trained on interaction data receive sparse, noisy
//! updates: each step touches only the rows that appeared in the batch.
//! When the rows are nodes of a similarity graph, the update for one row
//! carries information about its neighbors that plain optimizers discard.
//! This crate smooths the *update*, not the parameters: every step's
//! delta is passed through a graph operator that mixes each row with its
//! neighborhood before it is applied, so related rows evolve together
//! while stationary points of the underlying objective are preserved at
//! the operator's fixed points.
//!
//! The pieces:
//!
//! - [`sparse`]: CSR matrices, dense row-major matrices, and the
//!   deterministic sparse-dense product everything else is built on.
//! - [`graph`]: item-graph construction from interaction sequences,
//!   category labels, or embedding nearest neighbors, plus symmetric
//!   normalization and a plain-text interchange format.
//! - [`transform`]: the smoothing operators. An exact linear solve, a
//!   fixed-point iteration, a truncated Neumann series, and the rescaled
//!   Neumann series that is the practical default.
//! - [`optim`]: SGD, Adam, and AdamW steppers that smooth their updates,
//!   with explicit handling for rows idle in the current batch and
//!   checkpointing that refuses to resume under a different
//!   configuration.
//! - [`harness`]: a matrix-factorization training loop with ranking
//!   evaluation, a synthetic clustered-interaction generator, and a
//!   quadratic benchmark that measures convergence speed in isolation.
//! - [`verify`]: an executable suite of the invariants the other modules
//!   document, with fault injection to prove the suite can fail.
//!
//! Determinism is a design constraint throughout: given the same seed,
//! builds, training runs, and benchmarks reproduce bitwise, regardless
//! of thread count.

pub mod graph;
pub mod harness;
pub mod optim;
pub mod sparse;
pub mod transform;
pub mod verify;

mod error;
mod util;

pub use error::{Result, SevoError};
pub use util::sha256_hex;
