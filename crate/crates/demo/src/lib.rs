//! Browser bindings: projections of a user-entered distribution, the
//! quantile-Huber loss curve, and QRTD on the windy gridworld. Every export
//! returns a JSON string.

// `!(x >= lo)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qdrl::dist::{c51_projection, quantile_projection, wasserstein_p, FiniteDistribution};
use qdrl::mdp::{build_windy_gridworld, policy_iteration};
use qdrl::oracle::monte_carlo_returns;
use qdrl::qreg::{qr_grad, quantile_huber};
use qdrl::qrtd::{run_policy_evaluation, Algorithm, EvalConfig};
use qdrl::rng::{family_stream, stream_rng};

#[derive(Debug, Serialize)]
pub struct Projections {
    pub target: FiniteDistribution,
    pub quantile: Vec<f64>,
    pub quantile_w1: f64,
    pub c51: FiniteDistribution,
    pub c51_w1: f64,
}

/// Quantile projection onto `n` atoms and C51 projection onto `k` evenly
/// spaced support points spanning `[v_min, v_max]`.
pub fn projections(atoms_json: &str, n: usize, k: usize, v_min: f64, v_max: f64) -> qdrl::Result<Projections> {
    let target: FiniteDistribution = serde_json::from_str(atoms_json)?;
    if k < 2 || !(v_max > v_min) {
        return Err(qdrl::Error::InvalidArgument("need k >= 2 and v_max > v_min".into()));
    }
    let support: Vec<f64> = (0..k).map(|i| v_min + (v_max - v_min) * i as f64 / (k - 1) as f64).collect();
    let quantile = quantile_projection(&target, n)?;
    let c51 = c51_projection(&target, &support)?;
    Ok(Projections {
        quantile_w1: wasserstein_p(&target, &quantile.to_finite(), 1.0)?,
        c51_w1: wasserstein_p(&target, &c51, 1.0)?,
        quantile: quantile.locations().to_vec(),
        c51,
        target,
    })
}

#[derive(Debug, Serialize)]
pub struct LossCurve {
    pub u: Vec<f64>,
    pub loss: Vec<f64>,
    pub grad: Vec<f64>,
}

/// `quantile_huber(u)` and its derivative in `u` on `points` evenly spaced values.
pub fn loss_curve(tau: f64, kappa: f64, lo: f64, hi: f64, points: usize) -> qdrl::Result<LossCurve> {
    if !(tau > 0.0 && tau < 1.0) || !(kappa >= 0.0) || points < 2 || !(hi > lo) {
        return Err(qdrl::Error::InvalidArgument(
            "need 0 < tau < 1, kappa >= 0, points >= 2, hi > lo".into(),
        ));
    }
    let u: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    Ok(LossCurve {
        loss: u.iter().map(|&x| quantile_huber(x, tau, kappa)).collect(),
        grad: u.iter().map(|&x| -qr_grad(x, tau, kappa)).collect(),
        u,
    })
}

#[derive(Debug, Serialize)]
pub struct GridworldRun {
    pub theta: Vec<f64>,
    pub monte_carlo: Vec<f64>,
    pub w1: f64,
    pub mean_estimate: f64,
    pub mean_monte_carlo: f64,
}

/// All-pairs QRTD for `episodes` episodes under the optimal policy, compared
/// with `rollouts` Monte-Carlo returns from the start state.
pub fn gridworld(episodes: usize, n: usize, rollouts: usize, seed: u64) -> qdrl::Result<GridworldRun> {
    let g = build_windy_gridworld();
    let policy = policy_iteration(&g.mdp)?;
    let mut samples = monte_carlo_returns(&g.mdp, &policy, g.start, rollouts, &mut stream_rng(seed, family_stream(10, 0)))?;
    let truth = FiniteDistribution::from_samples(&samples)?;
    let config = EvalConfig {
        n,
        episodes,
        ..EvalConfig::default()
    };
    let mut rng = stream_rng(seed, family_stream(11, 2));
    let run = run_policy_evaluation(&g.mdp, &policy, g.start, Algorithm::QrtdAllPairs, &config, &truth, &mut rng)?;
    let table = run.quantiles.expect("distributional learner");
    let mut theta = table.theta(g.start).to_vec();
    theta.sort_by(f64::total_cmp);
    samples.sort_by(f64::total_cmp);
    Ok(GridworldRun {
        w1: wasserstein_p(&truth, &FiniteDistribution::uniform(&theta)?, 1.0)?,
        mean_estimate: table.mean(g.start),
        mean_monte_carlo: truth.mean(),
        theta,
        monte_carlo: samples,
    })
}

fn to_js<T: Serialize>(value: qdrl::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = projections)]
pub fn projections_js(atoms_json: &str, n: usize, k: usize, v_min: f64, v_max: f64) -> Result<String, JsError> {
    to_js(projections(atoms_json, n, k, v_min, v_max))
}

#[wasm_bindgen(js_name = lossCurve)]
pub fn loss_curve_js(tau: f64, kappa: f64, lo: f64, hi: f64, points: usize) -> Result<String, JsError> {
    to_js(loss_curve(tau, kappa, lo, hi, points))
}

#[wasm_bindgen(js_name = gridworld)]
pub fn gridworld_js(episodes: usize, n: usize, rollouts: usize, seed: u32) -> Result<String, JsError> {
    to_js(gridworld(episodes, n, rollouts, u64::from(seed)))
}
