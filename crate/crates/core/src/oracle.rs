//! Ground truth for return distributions and randomized checks of the
//! contraction results for the (projected) distributional Bellman operator.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dist::{
    maximal_wasserstein, quantile_projection, wasserstein_inf, wasserstein_p, FiniteDistribution,
    ValueDistributionTable,
};
use crate::mdp::{build_counterexample_mdp, FiniteMdp, Policy};
use crate::rng::{family_stream, stream_rng};
use crate::{Error, Result};

/// Rollouts are truncated after this many steps.
pub const MAX_ROLLOUT_STEPS: usize = 5000;
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;
/// Entries with more atoms than this are coarsened.
pub const MAX_ATOMS: usize = 100_000;
pub const FIXED_POINT_TOL: f64 = 1e-6;
pub const VERIFY_TOL: f64 = 1e-9;

/// Discounted returns of `rollouts` episodes from `x` under `policy`.
pub fn monte_carlo_returns<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    policy: &Policy,
    x: usize,
    rollouts: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    policy.check_shape(mdp)?;
    if rollouts == 0 {
        return Err(Error::invalid("need at least one rollout"));
    }
    if x >= mdp.n_states() {
        return Err(Error::invalid(format!("state {x} out of range")));
    }
    let gamma = mdp.gamma();
    let mut returns = Vec::with_capacity(rollouts);
    for _ in 0..rollouts {
        let (mut state, mut g, mut discount) = (x, 0.0, 1.0);
        for _ in 0..MAX_ROLLOUT_STEPS {
            if mdp.is_terminal(state) {
                break;
            }
            let a = policy.sample_action(state, rng);
            let t = mdp.sample_transition(state, a, rng)?;
            g += discount * t.reward;
            discount *= gamma;
            state = t.next_state;
        }
        returns.push(g);
    }
    Ok(returns)
}

/// Empirical return distribution from `x`.
pub fn monte_carlo_distribution<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    policy: &Policy,
    x: usize,
    rollouts: usize,
    rng: &mut R,
) -> Result<FiniteDistribution> {
    FiniteDistribution::from_samples(&monte_carlo_returns(mdp, policy, x, rollouts, rng)?)
}

/// Mean `W1` between bootstrap resamples of `samples` and the empirical
/// distribution of `samples`: the typical sampling error of a Monte-Carlo
/// distribution of this size.
pub fn bootstrap_w1_noise<R: Rng + ?Sized>(
    samples: &[f64],
    resamples: usize,
    rng: &mut R,
) -> Result<f64> {
    let base = FiniteDistribution::from_samples(samples)?;
    let mut total = 0.0;
    let mut draw = vec![0.0; samples.len()];
    for _ in 0..resamples.max(1) {
        for d in draw.iter_mut() {
            *d = samples[rng.random_range(0..samples.len())];
        }
        total += wasserstein_p(&FiniteDistribution::from_samples(&draw)?, &base, 1.0)?;
    }
    Ok(total / resamples.max(1) as f64)
}

/// Mixture `sum_a pi(a|x) Z(x, a)` of a state-action table.
pub fn state_distribution(
    policy: &Policy,
    table: &ValueDistributionTable,
    x: usize,
) -> FiniteDistribution {
    if table.n_actions() == 1 {
        return table.get(x, 0).clone();
    }
    let atoms = (0..table.n_actions())
        .flat_map(|a| {
            let pa = policy.prob(x, a);
            table.get(x, a).atoms().map(move |(l, w)| (l, pa * w))
        })
        .collect();
    FiniteDistribution::canonicalize(atoms, crate::dist::LOCATION_MERGE_TOLERANCE)
}

fn coarsen(atoms: Vec<(f64, f64)>, merge_tol: f64) -> FiniteDistribution {
    let d = FiniteDistribution::canonicalize(atoms, merge_tol);
    if d.len() <= MAX_ATOMS {
        return d;
    }
    // Fixed-width bins, so no atom moves by more than one bin width.
    let width = (d.max() - d.min()) / MAX_ATOMS as f64;
    let mut bins: Vec<(usize, f64, f64)> = Vec::with_capacity(MAX_ATOMS);
    for (l, w) in d.atoms() {
        let b = (((l - d.min()) / width) as usize).min(MAX_ATOMS - 1);
        match bins.last_mut() {
            Some((last, sum, mass)) if *last == b => {
                *sum += l * w;
                *mass += w;
            }
            _ => bins.push((b, l * w, w)),
        }
    }
    FiniteDistribution::canonicalize(bins.into_iter().map(|(_, sum, mass)| (sum / mass, mass)).collect(), 0.0)
}

/// Exact pushforward `(T^pi Z)`. A table with one column per action is a
/// state-action table; a single-column table is read as `Z(x)` under `pi`.
pub fn apply_distributional_bellman(
    mdp: &FiniteMdp,
    policy: &Policy,
    table: &ValueDistributionTable,
    merge_tol: f64,
) -> Result<ValueDistributionTable> {
    policy.check_shape(mdp)?;
    let per_action = table.n_actions() == mdp.n_actions() && mdp.n_actions() > 1;
    if table.n_states() != mdp.n_states() || !(per_action || table.n_actions() == 1) {
        return Err(Error::shape(
            format!("{}x{} or {}x1", mdp.n_states(), mdp.n_actions(), mdp.n_states()),
            format!("{}x{}", table.n_states(), table.n_actions()),
        ));
    }
    let gamma = mdp.gamma();
    let push = |atoms: &mut Vec<(f64, f64)>, x: usize, a: usize, scale: f64| {
        for s in mdp.successors(x, a) {
            if per_action {
                for b in 0..mdp.n_actions() {
                    let c = scale * s.prob * policy.prob(s.next, b);
                    if c > 0.0 {
                        atoms.extend(table.get(s.next, b).atoms().map(|(l, w)| (s.reward + gamma * l, c * w)));
                    }
                }
            } else {
                let c = scale * s.prob;
                atoms.extend(table.get(s.next, 0).atoms().map(|(l, w)| (s.reward + gamma * l, c * w)));
            }
        }
    };
    let mut entries = Vec::with_capacity(table.entries().len());
    for x in 0..mdp.n_states() {
        if per_action {
            for a in 0..mdp.n_actions() {
                let mut atoms = Vec::new();
                push(&mut atoms, x, a, 1.0);
                entries.push(coarsen(atoms, merge_tol));
            }
        } else {
            let mut atoms = Vec::new();
            for a in 0..mdp.n_actions() {
                let pa = policy.prob(x, a);
                if pa > 0.0 {
                    push(&mut atoms, x, a, pa);
                }
            }
            entries.push(coarsen(atoms, merge_tol));
        }
    }
    ValueDistributionTable::new(table.n_states(), table.n_actions(), entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    StateAction,
    State,
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub table: ValueDistributionTable,
    /// `d_inf` between successive iterates.
    pub residuals: Vec<f64>,
}

/// Iterates the distributional Bellman operator from all-zero returns until
/// successive iterates are within [`FIXED_POINT_TOL`] in maximal `W_inf`.
pub fn exact_distributional_fixed_point(
    mdp: &FiniteMdp,
    policy: &Policy,
    kind: TableKind,
    max_iterations: usize,
    merge_tol: f64,
) -> Result<FixedPoint> {
    if mdp.gamma() >= 1.0 {
        return Err(Error::invalid("fixed-point iteration needs gamma < 1"));
    }
    let columns = match kind {
        TableKind::StateAction => mdp.n_actions(),
        TableKind::State => 1,
    };
    let initial = ValueDistributionTable::filled(mdp.n_states(), columns, FiniteDistribution::dirac(0.0));
    exact_distributional_fixed_point_from(mdp, policy, initial, max_iterations, merge_tol)
}

/// Same iteration as [`exact_distributional_fixed_point`], started from `initial`.
pub fn exact_distributional_fixed_point_from(
    mdp: &FiniteMdp,
    policy: &Policy,
    initial: ValueDistributionTable,
    max_iterations: usize,
    merge_tol: f64,
) -> Result<FixedPoint> {
    if mdp.gamma() >= 1.0 {
        return Err(Error::invalid("fixed-point iteration needs gamma < 1"));
    }
    let mut table = initial;
    let mut residuals = Vec::new();
    for _ in 0..max_iterations {
        let next = apply_distributional_bellman(mdp, policy, &table, merge_tol)?;
        let residual = maximal_wasserstein(&table, &next, f64::INFINITY)?;
        residuals.push(residual);
        table = next;
        if residual < FIXED_POINT_TOL {
            return Ok(FixedPoint { table, residuals });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iterations,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Summary of a randomized verification harness.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub trials: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub failing_instances: Vec<serde_json::Value>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn absorb(&mut self, outcome: TrialOutcome) {
        self.trials += 1;
        if outcome.ratio.is_finite() {
            self.max_ratio = self.max_ratio.max(outcome.ratio);
        }
        if let Some(instance) = outcome.failure {
            self.violations += 1;
            self.failing_instances.push(instance);
        }
    }
}

struct TrialOutcome {
    ratio: f64,
    failure: Option<serde_json::Value>,
}

/// Runs `trials` independent trials, each with its own sub-stream of a base
/// seed drawn from `rng`, and folds them into a [`Report`].
fn run_trials<R: Rng + ?Sized>(
    family: u32,
    trials: usize,
    rng: &mut R,
    trial: impl Fn(u64, &mut crate::rng::Rng) -> TrialOutcome + Sync,
) -> Report {
    let base: u64 = rng.random();
    let one = |i: usize| {
        let stream = family_stream(family, i as u32);
        trial(stream, &mut stream_rng(base, stream))
    };
    #[cfg(feature = "parallel")]
    let outcomes: Vec<TrialOutcome> = {
        use rayon::prelude::*;
        (0..trials).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<TrialOutcome> = (0..trials).map(one).collect();

    let mut report = Report::default();
    for (i, mut outcome) in outcomes.into_iter().enumerate() {
        if let Some(instance) = outcome.failure.as_mut() {
            instance["base_seed"] = json!(base);
            instance["trial"] = json!(i);
        }
        report.absorb(outcome);
    }
    report
}

/// Flat Dirichlet draw.
fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Random MDP without terminal states. With `sparse`, each row keeps a
/// random non-empty subset of successors.
pub fn random_mdp<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    zero_rewards: bool,
    sparse: bool,
    rng: &mut R,
) -> Result<FiniteMdp> {
    let mut transitions = Vec::new();
    for x in 0..n_states {
        for a in 0..n_actions {
            let mut support: Vec<usize> = (0..n_states)
                .filter(|_| !sparse || rng.random_bool(0.5))
                .collect();
            if support.is_empty() {
                support.push(rng.random_range(0..n_states));
            }
            let probs = random_simplex(support.len(), rng);
            for (&next, p) in support.iter().zip(probs) {
                let r = if zero_rewards { 0.0 } else { rng.random_range(-1.0..=1.0) };
                transitions.push((x, a, next, p, r));
            }
        }
    }
    FiniteMdp::new(n_states, n_actions, gamma, vec![false; n_states], transitions)
}

pub fn random_policy<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Policy {
    let probs = (0..n_states).flat_map(|_| random_simplex(n_actions, rng)).collect();
    Policy::new(n_states, n_actions, probs).expect("simplex rows")
}

fn project_table(table: &ValueDistributionTable, n: usize) -> ValueDistributionTable {
    table.map(|d| quantile_projection(d, n).expect("n >= 1").to_finite())
}

fn random_quantile_table<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    n: usize,
    rng: &mut R,
) -> ValueDistributionTable {
    let entries = (0..n_states * n_actions)
        .map(|_| {
            let locs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            FiniteDistribution::uniform(&locs).unwrap()
        })
        .collect();
    ValueDistributionTable::new(n_states, n_actions, entries).unwrap()
}

/// Checks `d_inf(P T Z1, P T Z2) <= gamma d_inf(Z1, Z2)` for the `N`-atom
/// quantile projection `P` on random MDPs and quantile tables.
pub fn verify_projected_contraction<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Report {
    run_trials(1, trials, rng, |_, rng| {
        let ns = rng.random_range(1..=6);
        let na = rng.random_range(1..=3);
        let gamma = rng.random_range(0.5..=0.99);
        let n = [1, 2, 4, 8][rng.random_range(0..4)];
        let mdp = random_mdp(ns, na, gamma, false, rng.random_bool(0.5), rng).unwrap();
        let policy = random_policy(ns, na, rng);
        let z1 = random_quantile_table(ns, na, n, rng);
        let z2 = if rng.random_bool(0.5) {
            random_quantile_table(ns, na, n, rng)
        } else {
            // Small perturbation of a few entries probes near-tight cases.
            let scale = 10f64.powf(rng.random_range(-3.0..0.0));
            let mut z2 = z1.clone();
            for x in 0..ns {
                for a in 0..na {
                    if rng.random_bool(0.4) {
                        let q = quantile_projection(z1.get(x, a), n).unwrap();
                        let locs: Vec<f64> = q
                            .locations()
                            .iter()
                            .map(|&l| l + scale * rng.random_range(-1.0..1.0))
                            .collect();
                        z2.set(x, a, FiniteDistribution::uniform(&locs).unwrap());
                    }
                }
            }
            z2
        };
        let t1 = project_table(&apply_distributional_bellman(&mdp, &policy, &z1, 0.0).unwrap(), n);
        let t2 = project_table(&apply_distributional_bellman(&mdp, &policy, &z2, 0.0).unwrap(), n);
        let lhs = maximal_wasserstein(&t1, &t2, f64::INFINITY).unwrap();
        let rhs = maximal_wasserstein(&z1, &z2, f64::INFINITY).unwrap();
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        let failure = (lhs > gamma * rhs + VERIFY_TOL).then(|| {
            json!({
                "mdp": mdp.document(),
                "policy": policy,
                "n": n,
                "gamma": gamma,
                "z1": z1,
                "z2": z2,
                "lhs": lhs,
                "rhs": rhs,
            })
        });
        TrialOutcome { ratio, failure }
    })
}

/// Checks that the single-quantile projection of the backup of single-Dirac
/// tables is a non-expansion (zero rewards, no discount).
pub fn verify_single_dirac_case<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Report {
    run_trials(2, trials, rng, |_, rng| {
        let ns = rng.random_range(1..=6);
        let na = rng.random_range(1..=3);
        let mdp = random_mdp(ns, na, 1.0, true, true, rng).unwrap();
        let policy = random_policy(ns, na, rng);
        // Integer-valued locations make ties between successors common.
        let integer = rng.random_bool(0.5);
        let mut draw = |rng: &mut crate::rng::Rng| {
            if integer {
                rng.random_range(-3..=3) as f64
            } else {
                rng.random_range(-5.0..5.0)
            }
        };
        let dirac_table = |rng: &mut crate::rng::Rng, draw: &mut dyn FnMut(&mut crate::rng::Rng) -> f64| {
            let entries = (0..ns * na).map(|_| FiniteDistribution::dirac(draw(rng))).collect();
            ValueDistributionTable::new(ns, na, entries).unwrap()
        };
        let z = dirac_table(rng, &mut draw);
        let y = dirac_table(rng, &mut draw);
        let tau = match rng.random_range(0..4) {
            0 => f64::MIN_POSITIVE,
            1 => 1.0,
            _ => 1.0 - rng.random::<f64>(),
        };
        let (lhs, rhs) = single_dirac_sides(&mdp, &policy, &z, &y, tau);
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        let failure = (lhs > rhs + VERIFY_TOL).then(|| {
            json!({
                "mdp": mdp.document(),
                "policy": policy,
                "tau": tau,
                "z": z,
                "y": y,
                "lhs": lhs,
                "rhs": rhs,
            })
        });
        TrialOutcome { ratio, failure }
    })
}

/// `(d_inf(P_tau T Z, P_tau T Y), d_inf(Z, Y))` where `P_tau` maps each entry
/// to a Dirac at its `tau`-quantile.
pub fn single_dirac_sides(
    mdp: &FiniteMdp,
    policy: &Policy,
    z: &ValueDistributionTable,
    y: &ValueDistributionTable,
    tau: f64,
) -> (f64, f64) {
    let tz = apply_distributional_bellman(mdp, policy, z, 0.0).unwrap();
    let ty = apply_distributional_bellman(mdp, policy, y, 0.0).unwrap();
    let lhs = tz
        .entries()
        .iter()
        .zip(ty.entries())
        .map(|(a, b)| (a.quantile(tau) - b.quantile(tau)).abs())
        .fold(0.0, f64::max);
    let rhs = maximal_wasserstein(z, y, f64::INFINITY).unwrap();
    (lhs, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub p: f64,
    pub d_before: f64,
    pub d_after: f64,
    pub factor: f64,
}

/// Evaluates the projected backup on the three-state counterexample for each
/// order `p`: before the backup the tables are `2^(-1/p)` apart, after the
/// projected backup they are exactly 1 apart.
pub fn verify_non_expansion_counterexample(p_values: &[f64]) -> Result<(Report, Vec<CounterexampleRow>)> {
    let c = build_counterexample_mdp();
    let policy = Policy::uniform(3, 1);
    let tz = project_table(&apply_distributional_bellman(&c.mdp, &policy, &c.z, 0.0)?, 2);
    let ty = project_table(&apply_distributional_bellman(&c.mdp, &policy, &c.y, 0.0)?, 2);
    let mut report = Report::default();
    let mut rows = Vec::new();
    for &p in p_values {
        if !(p >= 1.0) || p.is_infinite() {
            return Err(Error::invalid(format!("order p = {p} must be in [1, inf)")));
        }
        let d_before = maximal_wasserstein(&c.z, &c.y, p)?;
        let d_after = maximal_wasserstein(&tz, &ty, p)?;
        let factor = d_after / d_before;
        let ok = (d_before - 2f64.powf(-1.0 / p)).abs() <= 1e-12 && (d_after - 1.0).abs() <= 1e-12;
        report.absorb(TrialOutcome {
            ratio: factor,
            failure: (!ok).then(|| json!({"p": p, "d_before": d_before, "d_after": d_after})),
        });
        rows.push(CounterexampleRow {
            p,
            d_before,
            d_after,
            factor,
        });
    }
    Ok((report, rows))
}

fn random_distribution<R: Rng + ?Sized>(rng: &mut R) -> FiniteDistribution {
    let k = rng.random_range(1..=8);
    let integer = rng.random_bool(0.3);
    let weights = if rng.random_bool(0.3) {
        vec![1.0 / k as f64; k]
    } else {
        random_simplex(k, rng)
    };
    let atoms: Vec<(f64, f64)> = weights
        .into_iter()
        .map(|w| {
            let loc = if integer {
                rng.random_range(-4..=4) as f64
            } else {
                rng.random_range(-10.0..10.0)
            };
            (loc, w)
        })
        .collect();
    FiniteDistribution::new(atoms).expect("simplex weights")
}

/// Checks `W_inf(P nu1, P nu2) = max_i |F1^-1(t_i) - F2^-1(t_i)|` on random
/// pairs; `max_ratio` records the largest absolute discrepancy.
pub fn verify_winf_identity<R: Rng + ?Sized>(trials: usize, tol: f64, rng: &mut R) -> Report {
    run_trials(3, trials, rng, |_, rng| {
        let nu1 = random_distribution(rng);
        let nu2 = random_distribution(rng);
        let n = rng.random_range(1..=16);
        let (lhs, rhs) = crate::dist::projection_winf_identity(&nu1, &nu2, n).unwrap();
        let gap = (lhs - rhs).abs();
        TrialOutcome {
            ratio: gap,
            failure: (gap > tol).then(|| json!({"nu1": nu1, "nu2": nu2, "n": n, "lhs": lhs, "rhs": rhs})),
        }
    })
}

/// Checks `d_p(T Z1, T Z2) <= gamma d_p(Z1, Z2)` (no projection) on random
/// instances.
pub fn verify_operator_contraction<R: Rng + ?Sized>(trials: usize, p: f64, rng: &mut R) -> Report {
    run_trials(4, trials, rng, |_, rng| {
        let ns = rng.random_range(1..=5);
        let na = rng.random_range(1..=3);
        let gamma = rng.random_range(0.5..=0.99);
        let mdp = random_mdp(ns, na, gamma, false, rng.random_bool(0.5), rng).unwrap();
        let policy = random_policy(ns, na, rng);
        let n = rng.random_range(1..=4);
        let z1 = random_quantile_table(ns, na, n, rng);
        let z2 = random_quantile_table(ns, na, n, rng);
        let t1 = apply_distributional_bellman(&mdp, &policy, &z1, 0.0).unwrap();
        let t2 = apply_distributional_bellman(&mdp, &policy, &z2, 0.0).unwrap();
        let lhs = maximal_wasserstein(&t1, &t2, p).unwrap();
        let rhs = maximal_wasserstein(&z1, &z2, p).unwrap();
        TrialOutcome {
            ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
            failure: (lhs > gamma * rhs + VERIFY_TOL).then(|| json!({"lhs": lhs, "rhs": rhs, "gamma": gamma})),
        }
    })
}

/// `W_inf` distance of each quantile pair, exposed for diagnostics.
pub fn entrywise_winf(a: &ValueDistributionTable, b: &ValueDistributionTable) -> Vec<f64> {
    a.entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| wasserstein_inf(x, y))
        .collect()
}
