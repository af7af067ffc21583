//! Textbook reference optimizers over flat parameter arrays.
//!
//! These are deliberately written with none of the crate's matrix or graph
//! machinery: plain scalar loops over `&[f64]`, one parameter at a time.
//! They define what "unsmoothed" means for equivalence checks: a production
//! stepper with smoothing disabled (`beta = 0`) must reproduce these
//! trajectories to near machine precision on dense gradients.
//!
//! Conventions match the production steppers so the comparison is
//! meaningful: `epsilon` sits inside the square root of the Adam
//! denominator, AdamW decay is decoupled and uses pre-step parameters, and
//! Adam/SGD couple decay into the gradient.

/// Moment buffers and step counter for the Adam-family references.
#[derive(Debug, Clone)]
pub struct ReferenceState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl ReferenceState {
    pub fn new(len: usize) -> Self {
        ReferenceState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One AdamW step: decoupled decay, bias-corrected moments,
/// `p -= lr * mhat / sqrt(vhat + eps) + lr * wd * p_pre`.
#[allow(clippy::too_many_arguments)]
pub fn adamw_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut ReferenceState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
) {
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for k in 0..params.len() {
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * grad[k];
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * grad[k] * grad[k];
        let mhat = state.m[k] / bc1;
        let vhat = state.v[k] / bc2;
        let p = params[k];
        params[k] = p - lr * mhat / (vhat + epsilon).sqrt() - lr * weight_decay * p;
    }
}

/// One Adam step with coupled decay: `g = grad + wd * p`, then the usual
/// bias-corrected update.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut ReferenceState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
) {
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for k in 0..params.len() {
        let g = grad[k] + weight_decay * params[k];
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g;
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g;
        let mhat = state.m[k] / bc1;
        let vhat = state.v[k] / bc2;
        params[k] -= lr * mhat / (vhat + epsilon).sqrt();
    }
}

/// One momentum-SGD step with coupled decay:
/// `g = grad + wd * p`, `buf = mu * buf + g`, `p -= lr * buf`.
pub fn sgd_step(
    params: &mut [f64],
    grad: &[f64],
    buffer: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for k in 0..params.len() {
        let g = grad[k] + weight_decay * params[k];
        buffer[k] = momentum * buffer[k] + g;
        params[k] -= lr * buffer[k];
    }
}
