//! Distributional reinforcement learning by quantile regression.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`] finite Markov decision processes, policies, exact solvers and
//!   the benchmark environments.
//! * [`dist`] finite distributions on the real line, inverse CDFs,
//!   Wasserstein metrics and the quantile / categorical projections.
//! * [`qreg`] quantile regression and quantile Huber losses.
//! * [`qrtd`] tabular quantile temporal-difference policy evaluation.
//! * [`qrdqn`] a small quantile-regression DQN with a dense network.
//! * [`oracle`] Monte-Carlo and exact distributional dynamic programming,
//!   plus randomized checks of the contraction results.

// `!(x >= lo)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod error;
pub mod mdp;
pub mod oracle;
pub mod qrdqn;
pub mod qreg;
pub mod qrtd;
pub mod rng;

pub use error::{Error, Result};
