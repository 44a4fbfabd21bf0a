use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 0.01 / 32.0 }
    }
}

/// First and second moment estimates, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// Bias-corrected Adam update at step `t >= 1`:
/// `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hyper: &AdamHyper, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::invalid("adam step counter starts at 1"));
    }
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(
            format!("{} parameters", params.len()),
            format!("{} grads, {} moments", grads.len(), state.m.len()),
        ));
    }
    let c1 = 1.0 - hyper.beta1.powf(t as f64);
    let c2 = 1.0 - hyper.beta2.powf(t as f64);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        *p -= hyper.lr * (*m / c1) / ((*v / c2).sqrt() + hyper.eps);
    }
    Ok(())
}
