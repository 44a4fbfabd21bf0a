use super::{FiniteMdp, Policy};
use crate::{Error, Result};

const SWEEP_TOLERANCE: f64 = 1e-13;
const MAX_SWEEPS: usize = 1_000_000;
/// Action values closer than this are treated as tied.
pub const ACTION_TIE_TOLERANCE: f64 = 1e-10;
const MAX_IMPROVEMENTS: usize = 10_000;

/// `Q^pi` and `V^pi` of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionValues {
    n_actions: usize,
    q: Vec<f64>,
    v: Vec<f64>,
}

impl ActionValues {
    pub fn q(&self, x: usize, a: usize) -> f64 {
        self.q[x * self.n_actions + a]
    }

    pub fn q_row(&self, x: usize) -> &[f64] {
        &self.q[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn v(&self, x: usize) -> f64 {
        self.v[x]
    }

    pub fn state_values(&self) -> &[f64] {
        &self.v
    }

    /// `max |Q(x,a) - E[R] - gamma E[Q(x', a')]|` under `policy`.
    pub fn bellman_residual(&self, mdp: &FiniteMdp, policy: &Policy) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let backup: f64 = mdp
                    .successors(x, a)
                    .iter()
                    .map(|s| {
                        let next_q: f64 = (0..mdp.n_actions())
                            .map(|b| policy.prob(s.next, b) * self.q(s.next, b))
                            .sum();
                        s.prob * (s.reward + mdp.gamma() * next_q)
                    })
                    .sum();
                worst = worst.max((self.q(x, a) - backup).abs());
            }
        }
        worst
    }
}

/// Solves the linear Bellman equation of `policy` by Gauss-Seidel sweeps on
/// `V^pi`, then reads off `Q^pi`.
pub fn exact_value(mdp: &FiniteMdp, policy: &Policy) -> Result<ActionValues> {
    policy.check_shape(mdp)?;
    let gamma = mdp.gamma();
    if gamma >= 1.0 {
        return Err(Error::invalid("exact evaluation needs gamma < 1"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut v = vec![0.0; ns];
    let mut converged = false;
    let mut delta = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        delta = 0.0;
        for x in 0..ns {
            let mut new = 0.0;
            for a in 0..na {
                let pa = policy.prob(x, a);
                if pa == 0.0 {
                    continue;
                }
                let backup: f64 = mdp
                    .successors(x, a)
                    .iter()
                    .map(|s| s.prob * (s.reward + gamma * v[s.next]))
                    .sum();
                new += pa * backup;
            }
            delta = delta.max((new - v[x]).abs());
            v[x] = new;
        }
        if delta < SWEEP_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations: MAX_SWEEPS,
            residual: delta,
        });
    }
    let mut q = vec![0.0; ns * na];
    for x in 0..ns {
        for a in 0..na {
            q[x * na + a] = mdp
                .successors(x, a)
                .iter()
                .map(|s| s.prob * (s.reward + gamma * v[s.next]))
                .sum();
        }
    }
    // Recompute V from Q so that the pair is exactly consistent.
    for (x, vx) in v.iter_mut().enumerate() {
        *vx = (0..na).map(|a| policy.prob(x, a) * q[x * na + a]).sum();
    }
    Ok(ActionValues { n_actions: na, q, v })
}

/// Lowest-index action within [`ACTION_TIE_TOLERANCE`] of the best.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .position(|&q| q >= best - ACTION_TIE_TOLERANCE)
        .unwrap_or(0)
}

/// Howard policy iteration from the all-zeros policy. An action is replaced
/// only when some other action is better by more than the tie tolerance, so
/// the loop cannot cycle between tied actions.
pub fn policy_iteration(mdp: &FiniteMdp) -> Result<Policy> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut actions = vec![0usize; ns];
    for _ in 0..MAX_IMPROVEMENTS {
        let policy = Policy::deterministic(na, &actions)?;
        let values = exact_value(mdp, &policy)?;
        let mut changed = false;
        for (x, action) in actions.iter_mut().enumerate() {
            if mdp.is_terminal(x) {
                continue;
            }
            let row = values.q_row(x);
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if row[*action] < best - ACTION_TIE_TOLERANCE {
                *action = argmax_lowest(row);
                changed = true;
            }
        }
        if !changed {
            return Ok(policy);
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_IMPROVEMENTS,
        residual: f64::NAN,
    })
}
