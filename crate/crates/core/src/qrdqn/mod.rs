//! Toy-scale quantile regression Q-learning with a dense network.

mod adam;
mod agent;
mod mlp;
mod replay;

use rand::Rng;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use agent::{
    control_task, greedy_policy, train_qrdqn, AgentConfig, ControlTask, CurvePoint, TrainResult, CHAIN_GAMMA,
    CHAIN_LENGTH, CONTROL_ENVS,
};
pub use mlp::{mlp_backward, mlp_forward, one_hot, ForwardTrace, LayerDocument, MlpParams, ParamsDocument, QuantileMatrix};
pub use replay::ReplayBuffer;

use crate::dist::quantile_midpoints;
use crate::qreg::{qr_grad, quantile_huber};
use crate::{Error, Result};

/// Action with the largest mean quantile; lowest index on ties.
pub fn greedy_action(theta: &QuantileMatrix) -> usize {
    let mut best = 0;
    let mut best_q = theta.mean(0);
    for a in 1..theta.n_actions() {
        let q = theta.mean(a);
        if q > best_q {
            best = a;
            best_q = q;
        }
    }
    best
}

pub fn epsilon_greedy<R: Rng + ?Sized>(theta: &QuantileMatrix, epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..theta.n_actions())
    } else {
        greedy_action(theta)
    }
}

/// `r + gamma * theta_j(x', a*)` with `a*` greedy under the target network's
/// output at `x'`; just `r` on terminal transitions.
pub fn bellman_target(next_theta: &QuantileMatrix, reward: f64, done: bool, gamma: f64) -> Vec<f64> {
    if done {
        return vec![reward; next_theta.n()];
    }
    let a = greedy_action(next_theta);
    next_theta.row(a).iter().map(|&t| reward + gamma * t).collect()
}

/// `sum_i (1/N) sum_j rho^kappa_{tau_i}(T_j - theta_i)` and its gradient with
/// respect to `theta`.
pub fn qrdqn_loss(theta: &[f64], targets: &[f64], kappa: f64) -> Result<(f64, Vec<f64>)> {
    if theta.len() != targets.len() {
        return Err(Error::shape(format!("{} targets", theta.len()), format!("{}", targets.len())));
    }
    if !(kappa >= 0.0) {
        return Err(Error::invalid(format!("kappa = {kappa} must be >= 0")));
    }
    let taus = quantile_midpoints(theta.len())?;
    let inv_n = 1.0 / theta.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for ((&th, &tau), g) in theta.iter().zip(taus.midpoints()).zip(grad.iter_mut()) {
        for &t in targets {
            let u = t - th;
            loss += inv_n * quantile_huber(u, tau, kappa);
            *g += inv_n * qr_grad(u, tau, kappa);
        }
    }
    Ok((loss, grad))
}
