//! Quadratic convergence benchmark.
//!
//! Minimizes `f(E, theta) = 1/2 ||E - E*||_F^2 + 1/2 ||theta - theta*||^2`
//! with smoothed gradient steps on `E` and plain steps on `theta`, counting
//! iterations until `f <= relative_threshold * f(0)`. The objective has unit
//! curvature, so learning rate 1 is the textbook optimum and the iteration
//! count isolates the effect of the transform's spectrum: the unscaled
//! Neumann operator squeezes every eigenvalue toward zero as `beta -> 1`,
//! while the rescaled variant restores a unit ceiling and converges in
//! correspondingly fewer steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SevoError};
use crate::graph::SparseGraph;
use crate::sparse::DenseMatrix;
use crate::transform::{transform, SEvoConfig};

/// Benchmark parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticConfig {
    /// Embedding columns.
    pub dimension: usize,
    /// Length of the dense parameter vector.
    pub dense_dim: usize,
    pub seed: u64,
    /// Step size on `E` (1.0 matches the unit-curvature optimum).
    pub learning_rate: f64,
    /// Step size on `theta`.
    pub dense_learning_rate: f64,
    /// Stop when `f <= relative_threshold * f(0)`.
    pub relative_threshold: f64,
    pub max_steps: usize,
    pub sevo: SEvoConfig,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        QuadraticConfig {
            dimension: 8,
            dense_dim: 8,
            seed: 1,
            learning_rate: 1.0,
            dense_learning_rate: 1.0,
            relative_threshold: 1e-6,
            max_steps: 200_000,
            sevo: SEvoConfig::default(),
        }
    }
}

impl QuadraticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.dense_dim == 0 {
            return Err(SevoError::Validation(
                "dimension and dense_dim must be >= 1".into(),
            ));
        }
        let finite_pos = |v: f64, name: &str| -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(SevoError::Validation(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
            Ok(())
        };
        finite_pos(self.learning_rate, "learning_rate")?;
        finite_pos(self.dense_learning_rate, "dense_learning_rate")?;
        if !(self.relative_threshold > 0.0 && self.relative_threshold < 1.0) {
            return Err(SevoError::Validation(format!(
                "relative_threshold must lie in (0, 1), got {}",
                self.relative_threshold
            )));
        }
        if self.max_steps == 0 {
            return Err(SevoError::Validation("max_steps must be >= 1".into()));
        }
        self.sevo.validate()
    }
}

/// How a benchmark run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchStatus {
    /// Reached the threshold within `max_steps`.
    Converged,
    /// Ran out of steps before reaching the threshold.
    ExhaustedSteps,
    /// Objective rose for 10 consecutive steps or became non-finite.
    Diverged,
}

/// Result of one benchmark run. `steps` is the count of steps executed:
/// for `Converged` it is the step at which the threshold was first met.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub status: BenchStatus,
    pub steps: usize,
    pub initial_value: f64,
    pub final_value: f64,
    /// Objective value after each step.
    pub trace: Vec<f64>,
}

/// Runs the benchmark on one graph. Targets and starting points are drawn
/// uniformly from [-1, 1) under the config seed.
pub fn quadratic_benchmark(graph: &SparseGraph, config: &QuadraticConfig) -> Result<BenchOutcome> {
    config.validate()?;
    let n = graph.n_nodes();
    if n == 0 {
        return Err(SevoError::Validation("empty graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let target_e = DenseMatrix::from_vec(n, config.dimension, draw(n * config.dimension))?;
    let mut e = DenseMatrix::from_vec(n, config.dimension, draw(n * config.dimension))?;
    let target_theta = draw(config.dense_dim);
    let mut theta = draw(config.dense_dim);

    let value = |e: &DenseMatrix, theta: &[f64]| -> f64 {
        let emb: f64 = e
            .data()
            .iter()
            .zip(target_e.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let dense: f64 = theta
            .iter()
            .zip(&target_theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        0.5 * (emb + dense)
    };

    let initial_value = value(&e, &theta);
    if initial_value == 0.0 {
        return Ok(BenchOutcome {
            status: BenchStatus::Converged,
            steps: 0,
            initial_value,
            final_value: 0.0,
            trace: Vec::new(),
        });
    }
    let stop_at = config.relative_threshold * initial_value;
    let mut trace = Vec::new();
    let mut prev = initial_value;
    let mut rising_streak = 0usize;
    for step in 1..=config.max_steps {
        let grad = e.sub(&target_e)?;
        let delta = transform(&grad, graph, &config.sevo)?;
        e.axpy(-config.learning_rate, &delta)?;
        for (t, target) in theta.iter_mut().zip(&target_theta) {
            *t -= config.dense_learning_rate * (*t - target);
        }
        let f = value(&e, &theta);
        trace.push(f);
        if !f.is_finite() {
            return Ok(BenchOutcome {
                status: BenchStatus::Diverged,
                steps: step,
                initial_value,
                final_value: f,
                trace,
            });
        }
        if f <= stop_at {
            return Ok(BenchOutcome {
                status: BenchStatus::Converged,
                steps: step,
                initial_value,
                final_value: f,
                trace,
            });
        }
        if f > prev {
            rising_streak += 1;
            if rising_streak >= 10 {
                return Ok(BenchOutcome {
                    status: BenchStatus::Diverged,
                    steps: step,
                    initial_value,
                    final_value: f,
                    trace,
                });
            }
        } else {
            rising_streak = 0;
        }
        prev = f;
    }
    let final_value = *trace.last().unwrap();
    Ok(BenchOutcome {
        status: BenchStatus::ExhaustedSteps,
        steps: config.max_steps,
        initial_value,
        final_value,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;
    use crate::transform::TransformVariant;

    fn ring_graph(n: usize) -> SparseGraph {
        let mut t = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            t.push((i, j, 1.0));
            t.push((j, i, 1.0));
        }
        SparseGraph::normalize(CsrMatrix::from_triplets(n, n, &t).unwrap()).unwrap()
    }

    #[test]
    fn identity_smoothing_converges_in_one_step() {
        let g = ring_graph(6);
        let mut cfg = QuadraticConfig::default();
        cfg.sevo.beta = 0.0;
        let out = quadratic_benchmark(&g, &cfg).unwrap();
        // With beta = 0 and unit learning rates both blocks land exactly on
        // the target after a single step.
        assert_eq!(out.status, BenchStatus::Converged);
        assert_eq!(out.steps, 1);
    }

    #[test]
    fn rescaled_needs_fewer_steps_than_unscaled() {
        let g = ring_graph(8);
        let mut rescaled = QuadraticConfig::default();
        rescaled.sevo.variant = TransformVariant::RescaledNeumann;
        let mut unscaled = QuadraticConfig::default();
        unscaled.sevo.variant = TransformVariant::Neumann;
        let a = quadratic_benchmark(&g, &rescaled).unwrap();
        let b = quadratic_benchmark(&g, &unscaled).unwrap();
        assert_eq!(a.status, BenchStatus::Converged);
        assert_eq!(b.status, BenchStatus::Converged);
        assert!(
            a.steps < b.steps,
            "rescaled took {} steps, unscaled {}",
            a.steps,
            b.steps
        );
    }

    #[test]
    fn objective_is_monotone_at_unit_learning_rate() {
        let g = ring_graph(8);
        let cfg = QuadraticConfig::default();
        let out = quadratic_benchmark(&g, &cfg).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn oversized_learning_rate_is_flagged_as_divergence() {
        let g = ring_graph(6);
        let mut cfg = QuadraticConfig::default();
        cfg.learning_rate = 3.0;
        cfg.max_steps = 5_000;
        let out = quadratic_benchmark(&g, &cfg).unwrap();
        assert_eq!(out.status, BenchStatus::Diverged);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let mut cfg = QuadraticConfig::default();
        cfg.relative_threshold = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = QuadraticConfig::default();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = QuadraticConfig::default();
        cfg.max_steps = 0;
        assert!(cfg.validate().is_err());
    }
}
