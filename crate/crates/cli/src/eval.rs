use rayon::prelude::*;
use serde::Serialize;

use qdrl::dist::FiniteDistribution;
use qdrl::mdp::{build_windy_gridworld, exact_value, policy_iteration};
use qdrl::qrtd::{evaluate_seed, Algorithm, EvalConfig, SeedEvaluation};

use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, read_text, write_csv, write_json};
use crate::Common;

#[derive(Serialize)]
struct CurveRow {
    episode: usize,
    algo: &'static str,
    seed: u64,
    sq_mean_err: f64,
    w1_err: Option<f64>,
}

#[derive(Serialize)]
struct QuantileRow {
    episode: usize,
    i: usize,
    tau: f64,
    theta: f64,
}

#[derive(Serialize)]
struct SeedTruth {
    seed: u64,
    rollouts: usize,
    mc_mean: f64,
    distribution: FiniteDistribution,
}

#[derive(Serialize)]
struct GroundTruth {
    start: usize,
    policy: Vec<usize>,
    exact_value: f64,
    seeds: Vec<SeedTruth>,
}

pub fn run(common: &Common, episodes: Option<usize>) -> CliResult<()> {
    let mut config: EvalConfig = match &common.config {
        Some(path) => serde_json::from_str(&read_text(path)?).map_err(qdrl::Error::from)?,
        None => EvalConfig::default(),
    };
    if let Some(seeds) = &common.seed {
        config.seeds = seeds.clone();
    }
    if let Some(k) = episodes {
        config.episodes = k;
    }
    if config.seeds.is_empty() {
        return Err(CliError::Argument("at least one seed is required".into()));
    }
    if config.algos.is_empty() {
        return Err(CliError::Argument("at least one algorithm is required".into()));
    }
    ensure_dir(&common.out)?;

    let g = build_windy_gridworld();
    let policy = policy_iteration(&g.mdp)?;
    let exact = exact_value(&g.mdp, &policy)?.v(g.start);
    let results: Vec<SeedEvaluation> = config
        .seeds
        .par_iter()
        .map(|&seed| evaluate_seed(&g.mdp, &policy, g.start, &config, seed))
        .collect::<qdrl::Result<_>>()?;

    let mut curves = Vec::new();
    for result in &results {
        for run in &result.runs {
            curves.extend(run.curve.iter().map(|c| CurveRow {
                episode: c.episode,
                algo: run.algorithm.name(),
                seed: result.seed,
                sq_mean_err: c.sq_mean_err,
                w1_err: c.w1_err,
            }));
        }
    }
    write_csv(&common.out, "curves.csv", &["episode", "algo", "seed", "sq_mean_err", "w1_err"], &curves)?;

    // Start-state quantiles of the first seed's first distributional learner.
    let mut quantiles = Vec::new();
    if let Some(run) = results[0].runs.iter().find(|r| r.algorithm != Algorithm::Td0) {
        let n = config.n;
        for (episode, theta) in &run.snapshots {
            quantiles.extend(theta.iter().enumerate().map(|(i, &t)| QuantileRow {
                episode: *episode,
                i: i + 1,
                tau: (2 * i + 1) as f64 / (2 * n) as f64,
                theta: t,
            }));
        }
    }
    write_csv(&common.out, "zdist.csv", &["episode", "i", "tau", "theta"], &quantiles)?;

    let truth = GroundTruth {
        start: g.start,
        policy: policy.actions().expect("policy iteration is deterministic"),
        exact_value: exact,
        seeds: results
            .iter()
            .map(|r| SeedTruth {
                seed: r.seed,
                rollouts: r.truth_samples.len(),
                mc_mean: r.truth.mean(),
                distribution: r.truth.clone(),
            })
            .collect(),
    };
    write_json(&common.out, "ground_truth.json", &truth)?;

    for result in &results {
        for run in &result.runs {
            if let Some(last) = run.curve.last() {
                let w1 = last.w1_err.map_or(String::new(), |w| format!(", W1 {w:.4}"));
                println!(
                    "seed {} {}: squared mean error {:.3e}{w1} after {} episodes",
                    result.seed,
                    run.algorithm.name(),
                    last.sq_mean_err,
                    last.episode
                );
            }
        }
    }
    println!("wrote curves.csv, zdist.csv, ground_truth.json to {}", common.out.display());
    Ok(())
}
