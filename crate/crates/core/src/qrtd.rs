//! Tabular distributional policy evaluation.
//!
//! [`QuantileTable`] holds `N` quantile estimates per state. Each QRTD step
//! nudges `theta_i(x)` up by `alpha * tau_i` when the sampled target
//! `r + gamma z'` is at or above it, and down by `alpha * (1 - tau_i)`
//! otherwise. Terminal transitions use the target `r` with no bootstrap.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{quantile_midpoints, wasserstein_p, FiniteDistribution, QuantileDistribution};
use crate::mdp::{FiniteMdp, Policy, TransitionSample};
use crate::oracle::monte_carlo_returns;
use crate::qreg::LrSchedule;
use crate::rng::{family_stream, stream_rng};
use crate::{Error, Result};

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("step size {alpha} outside (0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    n_states: usize,
    n: usize,
    taus: Vec<f64>,
    theta: Vec<f64>,
}

impl QuantileTable {
    pub fn zeros(n_states: usize, n: usize) -> Result<Self> {
        let taus = quantile_midpoints(n)?.midpoints().to_vec();
        Ok(Self {
            n_states,
            n,
            taus,
            theta: vec![0.0; n_states * n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn theta(&self, x: usize) -> &[f64] {
        &self.theta[x * self.n..(x + 1) * self.n]
    }

    pub fn set_theta(&mut self, x: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::shape(self.n, values.len()));
        }
        self.check_state(x)?;
        self.theta[x * self.n..(x + 1) * self.n].copy_from_slice(values);
        Ok(())
    }

    pub fn mean(&self, x: usize) -> f64 {
        self.theta(x).iter().sum::<f64>() / self.n as f64
    }

    pub fn distribution(&self, x: usize) -> QuantileDistribution {
        QuantileDistribution::new(self.theta(x).to_vec()).expect("finite table entries")
    }

    /// Draws `z' ~ Z_theta(x)`.
    pub fn sample_location<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> f64 {
        self.theta(x)[rng.random_range(0..self.n)]
    }

    fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.n_states {
            return Err(Error::invalid(format!("state {x} out of range")));
        }
        Ok(())
    }

    fn check_transition(&self, t: &TransitionSample) -> Result<()> {
        self.check_state(t.state)?;
        self.check_state(t.next_state)
    }

    /// Single-sample update with `z'` drawn from the next state's estimate.
    pub fn qrtd_update(
        &mut self,
        t: &TransitionSample,
        z_next: f64,
        gamma: f64,
        alpha: f64,
    ) -> Result<()> {
        check_alpha(alpha)?;
        self.check_transition(t)?;
        let target = if t.done { t.reward } else { t.reward + gamma * z_next };
        let n = self.n;
        let row = &mut self.theta[t.state * n..(t.state + 1) * n];
        for (theta, &tau) in row.iter_mut().zip(&self.taus) {
            let below = if target < *theta { 1.0 } else { 0.0 };
            *theta += alpha * (tau - below);
        }
        Ok(())
    }

    /// Expected update over every next-state atom `z' = theta_j(x')`:
    /// `theta_i(x) += alpha * (tau_i - #{j : r + gamma theta_j(x') < theta_i(x)} / N)`.
    pub fn qrtd_all_pairs_update(
        &mut self,
        t: &TransitionSample,
        gamma: f64,
        alpha: f64,
    ) -> Result<()> {
        check_alpha(alpha)?;
        self.check_transition(t)?;
        let n = self.n;
        let mut targets: Vec<f64> = if t.done {
            vec![t.reward; n]
        } else {
            self.theta(t.next_state)
                .iter()
                .map(|&z| t.reward + gamma * z)
                .collect()
        };
        targets.sort_by(f64::total_cmp);
        let row = &mut self.theta[t.state * n..(t.state + 1) * n];
        for (theta, &tau) in row.iter_mut().zip(&self.taus) {
            let below = targets.partition_point(|&g| g < *theta) as f64;
            *theta += alpha * (tau - below / n as f64);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    v: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(n_states: usize) -> Self {
        Self {
            v: vec![0.0; n_states],
        }
    }

    pub fn value(&self, x: usize) -> f64 {
        self.v[x]
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    /// `V(x) += alpha (r + gamma V(x') (1 - done) - V(x))`.
    pub fn td0_update(&mut self, t: &TransitionSample, gamma: f64, alpha: f64) -> Result<()> {
        check_alpha(alpha)?;
        if t.state >= self.v.len() || t.next_state >= self.v.len() {
            return Err(Error::invalid(format!(
                "transition ({}, {}) out of range",
                t.state, t.next_state
            )));
        }
        let bootstrap = if t.done { 0.0 } else { gamma * self.v[t.next_state] };
        self.v[t.state] += alpha * (t.reward + bootstrap - self.v[t.state]);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Td0,
    Qrtd,
    QrtdAllPairs,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Td0 => "td0",
            Algorithm::Qrtd => "qrtd",
            Algorithm::QrtdAllPairs => "qrtd_all_pairs",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "td0" => Ok(Algorithm::Td0),
            "qrtd" => Ok(Algorithm::Qrtd),
            "qrtd_all_pairs" => Ok(Algorithm::QrtdAllPairs),
            other => Err(Error::invalid(format!(
                "unknown algorithm {other:?} (expected td0, qrtd or qrtd_all_pairs)"
            ))),
        }
    }
}

fn default_n() -> usize {
    32
}
fn default_alpha0() -> f64 {
    0.1
}
fn default_halve_every() -> usize {
    2000
}
fn default_episodes() -> usize {
    10_000
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_max_steps() -> usize {
    5000
}
fn default_mc_rollouts() -> usize {
    1000
}
fn default_algos() -> Vec<Algorithm> {
    vec![Algorithm::Td0, Algorithm::QrtdAllPairs]
}
fn default_snapshot_every() -> usize {
    100
}

/// Policy-evaluation experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_halve_every")]
    pub halve_every: usize,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_max_steps")]
    pub max_episode_steps: usize,
    #[serde(default = "default_mc_rollouts")]
    pub mc_rollouts: usize,
    #[serde(default = "default_algos")]
    pub algos: Vec<Algorithm>,
    /// Episodes between quantile snapshots of the start state.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl EvalConfig {
    /// Step size for a 1-based episode index.
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::Halving {
            initial: self.alpha0,
            period: self.halve_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub episode: usize,
    pub sq_mean_err: f64,
    /// Absent for TD(0), which has no distribution.
    pub w1_err: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EvaluationRun {
    pub algorithm: Algorithm,
    pub curve: Vec<CurveRecord>,
    /// `(episode, theta(start))` every `snapshot_every` episodes and at the end.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub quantiles: Option<QuantileTable>,
    pub values: Option<ValueTable>,
}

enum Learner {
    Td(ValueTable),
    Quantile(QuantileTable),
}

/// Follows `policy` from `start` for `config.episodes` episodes, recording the
/// error of the start-state estimate against `truth` after every episode.
pub fn run_policy_evaluation<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    policy: &Policy,
    start: usize,
    algorithm: Algorithm,
    config: &EvalConfig,
    truth: &FiniteDistribution,
    rng: &mut R,
) -> Result<EvaluationRun> {
    policy.check_shape(mdp)?;
    if start >= mdp.n_states() {
        return Err(Error::invalid(format!("start state {start} out of range")));
    }
    let gamma = mdp.gamma();
    let schedule = config.schedule();
    let true_mean = truth.mean();
    let mut learner = match algorithm {
        Algorithm::Td0 => Learner::Td(ValueTable::zeros(mdp.n_states())),
        _ => Learner::Quantile(QuantileTable::zeros(mdp.n_states(), config.n)?),
    };
    let mut curve = Vec::with_capacity(config.episodes);
    let mut snapshots = Vec::new();

    for episode in 1..=config.episodes {
        let alpha = schedule.rate(episode);
        let mut x = start;
        for _ in 0..config.max_episode_steps {
            if mdp.is_terminal(x) {
                break;
            }
            let a = policy.sample_action(x, rng);
            let t = mdp.sample_transition(x, a, rng)?;
            match (&mut learner, algorithm) {
                (Learner::Td(v), _) => v.td0_update(&t, gamma, alpha)?,
                (Learner::Quantile(q), Algorithm::Qrtd) => {
                    let z = if t.done { 0.0 } else { q.sample_location(t.next_state, rng) };
                    q.qrtd_update(&t, z, gamma, alpha)?;
                }
                (Learner::Quantile(q), _) => q.qrtd_all_pairs_update(&t, gamma, alpha)?,
            }
            x = t.next_state;
            if t.done {
                break;
            }
        }

        let record = match &learner {
            Learner::Td(v) => CurveRecord {
                episode,
                sq_mean_err: (true_mean - v.value(start)).powi(2),
                w1_err: None,
            },
            Learner::Quantile(q) => {
                let estimate = FiniteDistribution::uniform(q.theta(start))?;
                CurveRecord {
                    episode,
                    sq_mean_err: (true_mean - q.mean(start)).powi(2),
                    w1_err: Some(wasserstein_p(truth, &estimate, 1.0)?),
                }
            }
        };
        curve.push(record);
        if let Learner::Quantile(q) = &learner {
            let every = config.snapshot_every.max(1);
            if episode % every == 0 || episode == config.episodes {
                snapshots.push((episode, q.theta(start).to_vec()));
            }
        }
    }

    let (quantiles, values) = match learner {
        Learner::Td(v) => (None, Some(v)),
        Learner::Quantile(q) => (Some(q), None),
    };
    Ok(EvaluationRun {
        algorithm,
        curve,
        snapshots,
        quantiles,
        values,
    })
}

/// Monte-Carlo ground truth and one run per configured algorithm, all
/// for the same seed.
#[derive(Debug, Clone)]
pub struct SeedEvaluation {
    pub seed: u64,
    pub truth_samples: Vec<f64>,
    pub truth: FiniteDistribution,
    pub runs: Vec<EvaluationRun>,
}

impl Algorithm {
    fn stream_index(self) -> u32 {
        match self {
            Algorithm::Td0 => 0,
            Algorithm::Qrtd => 1,
            Algorithm::QrtdAllPairs => 2,
        }
    }
}

/// Ground truth from `config.mc_rollouts` rollouts (sub-stream family 10),
/// then each algorithm on its own sub-stream (family 11), so adding or
/// dropping an algorithm leaves the other curves unchanged.
pub fn evaluate_seed(
    mdp: &FiniteMdp,
    policy: &Policy,
    start: usize,
    config: &EvalConfig,
    seed: u64,
) -> Result<SeedEvaluation> {
    let mut truth_rng = stream_rng(seed, family_stream(10, 0));
    let truth_samples = monte_carlo_returns(mdp, policy, start, config.mc_rollouts, &mut truth_rng)?;
    let truth = FiniteDistribution::from_samples(&truth_samples)?;
    let runs = config
        .algos
        .iter()
        .map(|&algo| {
            let mut rng = stream_rng(seed, family_stream(11, algo.stream_index()));
            run_policy_evaluation(mdp, policy, start, algo, config, &truth, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(SeedEvaluation { seed, truth_samples, truth, runs })
}
