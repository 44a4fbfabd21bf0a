use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, bellman_target, epsilon_greedy, greedy_action, mlp_forward, one_hot, qrdqn_loss};
use super::{AdamHyper, AdamState, MlpParams, QuantileMatrix, ReplayBuffer};
use crate::mdp::{build_chain, build_windy_gridworld, exact_value, FiniteMdp, Policy};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub kappa: f64,
    pub lr: f64,
    pub adam_eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Discount used for targets; the environment's own when absent.
    pub gamma: Option<f64>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub target_sync: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub total_steps: usize,
    pub learning_starts: usize,
    pub train_every: usize,
    pub eval_every: usize,
    pub max_episode_steps: usize,
    /// Start episodes from a uniformly random non-terminal state instead of
    /// the fixed start state.
    pub random_starts: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            n: 32,
            kappa: 1.0,
            lr: 5e-4,
            adam_eps: 0.01 / 32.0,
            beta1: 0.9,
            beta2: 0.999,
            gamma: None,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_steps: 10_000,
            target_sync: 200,
            batch_size: 32,
            buffer_capacity: 10_000,
            hidden: vec![64, 64],
            seed: 0,
            total_steps: 20_000,
            learning_starts: 500,
            train_every: 1,
            eval_every: 1000,
            max_episode_steps: 500,
            random_starts: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("N", self.n),
            ("target_sync", self.target_sync),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("train_every", self.train_every),
            ("eval_every", self.eval_every),
            ("max_episode_steps", self.max_episode_steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !(self.kappa >= 0.0) || !(self.lr > 0.0) || !(self.adam_eps > 0.0) {
            return Err(Error::invalid("kappa >= 0, lr > 0 and adam_eps > 0 required"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas must be in [0, 1)"));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::invalid(format!("gamma = {g} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_end)
            || !(0.0..=1.0).contains(&self.epsilon_start)
            || self.epsilon_end > self.epsilon_start
        {
            return Err(Error::invalid("need 0 <= epsilon_end <= epsilon_start <= 1"));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::invalid("batch_size exceeds buffer_capacity"));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over the decay steps.
    pub fn epsilon(&self, step: usize) -> f64 {
        if step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }
}

pub const CHAIN_LENGTH: usize = 6;
pub const CHAIN_GAMMA: f64 = 0.9;
pub const CONTROL_ENVS: [&str; 2] = ["chain", "gridworld"];

/// A named control environment with the training settings tuned for it.
#[derive(Debug, Clone)]
pub struct ControlTask {
    pub name: &'static str,
    pub mdp: FiniteMdp,
    pub start: usize,
    pub config: AgentConfig,
}

/// `chain`: walk right along [`CHAIN_LENGTH`] states to a rewarding end.
/// `gridworld`: the two-room windy gridworld, trained longer and with
/// episodes started from random states so the goal is found early.
pub fn control_task(name: &str) -> Result<ControlTask> {
    match name {
        "chain" => Ok(ControlTask {
            name: "chain",
            mdp: build_chain(CHAIN_LENGTH, CHAIN_GAMMA),
            start: 0,
            config: AgentConfig {
                total_steps: 5000,
                epsilon_decay_steps: 2500,
                ..AgentConfig::default()
            },
        }),
        "gridworld" => {
            let g = build_windy_gridworld();
            Ok(ControlTask {
                name: "gridworld",
                mdp: g.mdp,
                start: g.start,
                config: AgentConfig {
                    lr: 1e-3,
                    total_steps: 60_000,
                    epsilon_decay_steps: 20_000,
                    eval_every: 5000,
                    random_starts: true,
                    ..AgentConfig::default()
                },
            })
        }
        other => Err(Error::invalid(format!(
            "unknown environment {other:?}; valid names: {}",
            CONTROL_ENVS.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    /// Exact value at the start state of the current greedy policy.
    pub greedy_return: f64,
    /// Mean minibatch loss since the previous evaluation point; NaN before
    /// learning starts.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: MlpParams,
    pub curve: Vec<CurvePoint>,
    pub policy: Policy,
}

impl TrainResult {
    pub fn quantiles(&self, x: usize) -> QuantileMatrix {
        mlp_forward(&self.params, &one_hot(x, self.params.input_dim())).expect("input sized by construction")
    }
}

/// Deterministic greedy policy of the network; terminal states take action 0.
pub fn greedy_policy(mdp: &FiniteMdp, params: &MlpParams) -> Result<Policy> {
    let actions: Vec<usize> = (0..mdp.n_states())
        .map(|x| {
            if mdp.is_terminal(x) {
                Ok(0)
            } else {
                mlp_forward(params, &one_hot(x, mdp.n_states())).map(|t| greedy_action(&t))
            }
        })
        .collect::<Result<_>>()?;
    Policy::deterministic(mdp.n_actions(), &actions)
}

fn greedy_return(mdp: &FiniteMdp, params: &MlpParams, start: usize) -> Result<f64> {
    if mdp.gamma() >= 1.0 {
        return Ok(f64::NAN);
    }
    Ok(exact_value(mdp, &greedy_policy(mdp, params)?)?.v(start))
}

/// DQN-style training with quantile-Huber loss, experience replay and a
/// periodically synchronised target network. States are one-hot encoded.
pub fn train_qrdqn<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    start: usize,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<TrainResult> {
    config.validate()?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if start >= ns || mdp.is_terminal(start) {
        return Err(Error::invalid(format!("start state {start} must be a non-terminal state")));
    }
    let gamma = config.gamma.unwrap_or(mdp.gamma());
    let starts: Vec<usize> = if config.random_starts {
        (0..ns).filter(|&x| !mdp.is_terminal(x)).collect()
    } else {
        vec![start]
    };
    let features: Vec<Vec<f64>> = (0..ns).map(|x| one_hot(x, ns)).collect();
    let hyper = config.adam();
    let batch_scale = 1.0 / config.batch_size as f64;

    let mut online = MlpParams::init(ns, &config.hidden, na, config.n, rng)?;
    let mut target = online.clone();
    let mut adam = AdamState::new(online.as_slice().len());
    let mut grads = online.zeros_like();
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut out_grad = vec![0.0; na * config.n];

    let mut curve = Vec::new();
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);
    let mut updates = 0u64;
    let mut state = starts[rng.random_range(0..starts.len())];
    let mut episode_steps = 0;

    for step in 1..=config.total_steps {
        let theta = mlp_forward(&online, &features[state])?;
        let action = epsilon_greedy(&theta, config.epsilon(step - 1), rng);
        let t = mdp.sample_transition(state, action, rng)?;
        buffer.push(t);
        episode_steps += 1;
        if t.done || episode_steps >= config.max_episode_steps {
            state = starts[rng.random_range(0..starts.len())];
            episode_steps = 0;
        } else {
            state = t.next_state;
        }

        if buffer.len() >= config.learning_starts.max(config.batch_size) && step % config.train_every == 0 {
            grads.as_mut_slice().fill(0.0);
            let mut batch_loss = 0.0;
            for tr in buffer.sample(config.batch_size, rng)? {
                let next = mlp_forward(&target, &features[tr.next_state])?;
                let targets = bellman_target(&next, tr.reward, tr.done, gamma);
                let trace = online.forward_trace(&features[tr.state])?;
                let row = &trace.output()[tr.action * config.n..(tr.action + 1) * config.n];
                let (loss, g) = qrdqn_loss(row, &targets, config.kappa)?;
                batch_loss += loss;
                out_grad.fill(0.0);
                for (o, gi) in out_grad[tr.action * config.n..].iter_mut().zip(&g) {
                    *o = gi * batch_scale;
                }
                online.accumulate_gradient(&trace, &out_grad, &mut grads)?;
            }
            updates += 1;
            adam_step(online.as_mut_slice(), grads.as_slice(), &mut adam, &hyper, updates)?;
            loss_sum += batch_loss * batch_scale;
            loss_count += 1;
        }
        if step % config.target_sync == 0 {
            target = online.clone();
        }
        if step % config.eval_every == 0 || step == config.total_steps {
            curve.push(CurvePoint {
                step,
                greedy_return: greedy_return(mdp, &online, start)?,
                loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { f64::NAN },
            });
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    if !online.is_finite() {
        return Err(Error::invalid("training diverged to non-finite parameters"));
    }
    let policy = greedy_policy(mdp, &online)?;
    Ok(TrainResult { params: online, curve, policy })
}
