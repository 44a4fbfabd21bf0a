//! Finite MDPs with deterministic per-transition rewards.

mod envs;
mod solve;

pub use envs::{
    build_chain, build_counterexample_mdp, build_self_loop, build_windy_gridworld, Counterexample,
    Gridworld, GridAction, GRIDWORLD_GAMMA, GRID_HEIGHT, GRID_WIDTH, RANDOM_MOVE_PROB, WIND,
};
pub use solve::{exact_value, policy_iteration, ActionValues};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    terminal: Vec<bool>,
    /// Successor lists indexed by `state * n_actions + action`.
    rows: Vec<Vec<Successor>>,
}

/// JSON layout: transitions are `[x, a, x', p, r]` rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub terminal: Vec<bool>,
    pub transitions: Vec<(usize, usize, usize, f64, f64)>,
}

impl FiniteMdp {
    /// Builds and validates an MDP. Duplicate `(x, a, x')` rows accumulate
    /// probability and must agree on the reward. Rows for terminal states
    /// may be omitted; they become reward-free self-loops.
    ///
    /// `gamma` may equal 1 for the finite-horizon constructions used by the
    /// verification harnesses; the solvers reject it.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        terminal: Vec<bool>,
        transitions: impl IntoIterator<Item = (usize, usize, usize, f64, f64)>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("MDP needs at least one state and one action"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("discount {gamma} outside [0, 1]")));
        }
        if terminal.len() != n_states {
            return Err(Error::shape(n_states, terminal.len()));
        }
        let mut rows: Vec<Vec<Successor>> = vec![Vec::new(); n_states * n_actions];
        for (x, a, next, prob, reward) in transitions {
            if x >= n_states || next >= n_states || a >= n_actions {
                return Err(Error::invalid(format!(
                    "transition ({x}, {a}, {next}) out of range"
                )));
            }
            if !(0.0..=1.0).contains(&prob) {
                return Err(Error::invalid(format!("probability {prob} outside [0, 1]")));
            }
            if !reward.is_finite() {
                return Err(Error::invalid(format!("non-finite reward {reward}")));
            }
            if terminal[x] {
                let is_self_loop = next == x && reward == 0.0;
                if prob > 0.0 && !is_self_loop {
                    return Err(Error::invalid(format!(
                        "terminal state {x} must self-loop with reward 0"
                    )));
                }
                continue;
            }
            if prob == 0.0 {
                continue;
            }
            let row = &mut rows[x * n_actions + a];
            match row.iter_mut().find(|s| s.next == next) {
                Some(s) if s.reward != reward => {
                    return Err(Error::invalid(format!(
                        "conflicting rewards for ({x}, {a}, {next})"
                    )))
                }
                Some(s) => s.prob += prob,
                None => row.push(Successor { next, prob, reward }),
            }
        }
        for x in 0..n_states {
            for a in 0..n_actions {
                let row = &mut rows[x * n_actions + a];
                if terminal[x] {
                    *row = vec![Successor {
                        next: x,
                        prob: 1.0,
                        reward: 0.0,
                    }];
                    continue;
                }
                let total: f64 = row.iter().map(|s| s.prob).sum();
                if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                    return Err(Error::invalid(format!(
                        "transition probabilities of ({x}, {a}) sum to {total}"
                    )));
                }
                row.sort_by_key(|s| s.next);
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            terminal,
            rows,
        })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("MDP serialization cannot fail")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_terminal(&self, x: usize) -> bool {
        self.terminal[x]
    }

    pub fn terminal(&self) -> &[bool] {
        &self.terminal
    }

    pub fn successors(&self, x: usize, a: usize) -> &[Successor] {
        &self.rows[x * self.n_actions + a]
    }

    /// Probability of `x -> next` under action `a`.
    pub fn transition_prob(&self, x: usize, a: usize, next: usize) -> f64 {
        self.successors(x, a)
            .iter()
            .find(|s| s.next == next)
            .map_or(0.0, |s| s.prob)
    }

    /// Expected immediate reward of `(x, a)`.
    pub fn expected_reward(&self, x: usize, a: usize) -> f64 {
        self.successors(x, a).iter().map(|s| s.prob * s.reward).sum()
    }

    /// Draws `x'` from `P(.|x, a)`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        x: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<TransitionSample> {
        if x >= self.n_states || a >= self.n_actions {
            return Err(Error::invalid(format!("state/action ({x}, {a}) out of range")));
        }
        if self.terminal[x] {
            return Err(Error::invalid(format!("cannot act from terminal state {x}")));
        }
        let row = self.successors(x, a);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = row[row.len() - 1];
        for s in row {
            acc += s.prob;
            if u < acc {
                chosen = *s;
                break;
            }
        }
        Ok(TransitionSample {
            state: x,
            action: a,
            reward: chosen.reward,
            next_state: chosen.next,
            done: self.terminal[chosen.next],
        })
    }

    pub fn document(&self) -> MdpDocument {
        let mut transitions = Vec::new();
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                for s in self.successors(x, a) {
                    transitions.push((x, a, s.next, s.prob, s.reward));
                }
            }
        }
        MdpDocument {
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.gamma,
            terminal: self.terminal.clone(),
            transitions,
        }
    }
}

impl TryFrom<MdpDocument> for FiniteMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        FiniteMdp::new(
            doc.n_states,
            doc.n_actions,
            doc.gamma,
            doc.terminal,
            doc.transitions,
        )
    }
}

impl From<FiniteMdp> for MdpDocument {
    fn from(mdp: FiniteMdp) -> Self {
        mdp.document()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
}

/// Stochastic policy `pi(a | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::shape(n_states * n_actions, probs.len()));
        }
        for (x, row) in probs.chunks(n_actions.max(1)).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid(format!("policy row {x} has entries outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(Error::invalid(format!("policy row {x} sums to {total}")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (x, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::invalid(format!("action {a} out of range at state {x}")));
            }
            probs[x * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    /// The action chosen in each state, if the policy is deterministic.
    pub fn actions(&self) -> Option<Vec<usize>> {
        (0..self.n_states)
            .map(|x| self.row(x).iter().position(|&p| p == 1.0))
            .collect()
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let row = self.row(x);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub(crate) fn check_shape(&self, mdp: &FiniteMdp) -> Result<()> {
        if (self.n_states, self.n_actions) != (mdp.n_states(), mdp.n_actions()) {
            return Err(Error::shape(
                format!("{}x{}", mdp.n_states(), mdp.n_actions()),
                format!("{}x{}", self.n_states, self.n_actions),
            ));
        }
        Ok(())
    }
}
