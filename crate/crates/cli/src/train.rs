use rayon::prelude::*;
use serde::Serialize;

use qdrl::mdp::{exact_value, policy_iteration};
use qdrl::qrdqn::{control_task, greedy_action, train_qrdqn, AgentConfig, ControlTask, TrainResult};
use qdrl::rng::seeded;

use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, read_text, write_csv, write_json};
use crate::Common;

#[derive(Serialize)]
struct CurveRow {
    step: usize,
    seed: u64,
    kappa: f64,
    greedy_return: f64,
    loss: Option<f64>,
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    policy: Vec<usize>,
    greedy_return: f64,
    optimal_return: f64,
    matches_optimal: bool,
    greedy_action: usize,
    start_mean: f64,
    start_q_star: f64,
    start_quantiles: Vec<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    env: &'a str,
    kappa: f64,
    config: &'a AgentConfig,
    optimal_policy: Vec<usize>,
    seeds: Vec<SeedSummary>,
}

/// Task preset with the fields of the config file (if any) laid over it.
fn load_config(task: &ControlTask, common: &Common) -> CliResult<(AgentConfig, bool)> {
    let Some(path) = &common.config else {
        return Ok((task.config.clone(), false));
    };
    let overrides: serde_json::Value = serde_json::from_str(&read_text(path)?).map_err(qdrl::Error::from)?;
    let serde_json::Value::Object(overrides) = overrides else {
        return Err(CliError::Argument(format!("{}: expected a JSON object", path.display())));
    };
    let has_kappa = overrides.contains_key("kappa");
    let mut merged = serde_json::to_value(&task.config).map_err(qdrl::Error::from)?;
    merged.as_object_mut().expect("struct serializes to an object").extend(overrides);
    let config: AgentConfig = serde_json::from_value(merged).map_err(qdrl::Error::from)?;
    Ok((config, has_kappa))
}

pub fn run(common: &Common, env: &str, kappa: Option<f64>) -> CliResult<()> {
    let task = control_task(env)?;
    let (config, config_has_kappa) = load_config(&task, common)?;
    config.validate()?;
    let kappas = match kappa {
        Some(k) => vec![k],
        None if config_has_kappa => vec![config.kappa],
        None => vec![0.0, 1.0],
    };
    let seeds = common.seed.clone().unwrap_or_else(|| vec![0, 1, 2]);
    if seeds.is_empty() {
        return Err(CliError::Argument("at least one seed is required".into()));
    }
    ensure_dir(&common.out)?;

    let optimal = policy_iteration(&task.mdp)?;
    let q_star = exact_value(&task.mdp, &optimal)?;
    let optimal_return = q_star.v(task.start);

    for &k in &kappas {
        let config = AgentConfig { kappa: k, ..config.clone() };
        config.validate()?;
        let runs: Vec<(u64, TrainResult)> = seeds
            .par_iter()
            .map(|&seed| {
                let config = AgentConfig { seed, ..config.clone() };
                train_qrdqn(&task.mdp, task.start, &config, &mut seeded(seed)).map(|r| (seed, r))
            })
            .collect::<qdrl::Result<_>>()?;

        let mut rows = Vec::new();
        let mut summaries = Vec::new();
        for (seed, result) in &runs {
            rows.extend(result.curve.iter().map(|p| CurveRow {
                step: p.step,
                seed: *seed,
                kappa: k,
                greedy_return: p.greedy_return,
                loss: (!p.loss.is_nan()).then_some(p.loss),
            }));
            let theta = result.quantiles(task.start);
            let a = greedy_action(&theta);
            let greedy_return = exact_value(&task.mdp, &result.policy)?.v(task.start);
            summaries.push(SeedSummary {
                seed: *seed,
                policy: result.policy.actions().expect("greedy policy is deterministic"),
                greedy_return,
                optimal_return,
                matches_optimal: result.policy == optimal,
                greedy_action: a,
                start_mean: theta.mean(a),
                start_q_star: q_star.q(task.start, a),
                start_quantiles: theta.row(a).to_vec(),
            });
            write_json(&common.out, &format!("params_kappa{k}_seed{seed}.json"), &result.params)?;
            println!(
                "{env} kappa={k} seed={seed}: greedy return {greedy_return:.4} (optimal {optimal_return:.4}), policy {}",
                if result.policy == optimal { "optimal" } else { "suboptimal" }
            );
        }
        write_csv(
            &common.out,
            &format!("curves_kappa{k}.csv"),
            &["step", "seed", "kappa", "greedy_return", "loss"],
            &rows,
        )?;
        let summary = Summary {
            env: task.name,
            kappa: k,
            config: &config,
            optimal_policy: optimal.actions().expect("policy iteration is deterministic"),
            seeds: summaries,
        };
        write_json(&common.out, &format!("policy_kappa{k}.json"), &summary)?;
    }
    Ok(())
}
