mod common;

use qdrl::dist::{maximal_wasserstein, quantile_projection, wasserstein, FiniteDistribution, ValueDistributionTable};
use qdrl::mdp::{build_windy_gridworld, policy_iteration, FiniteMdp};
use qdrl::oracle::{
    exact_distributional_fixed_point, exact_distributional_fixed_point_from, random_policy, TableKind,
    DEFAULT_MERGE_TOL,
};
use qdrl::qrtd::{evaluate_seed, Algorithm, EvalConfig};
use qdrl::rng::seeded;
use rand::Rng;

/// Random MDP with rewards in {0, 1} and discount 0.2, so returns live on a
/// lattice and the exact fixed point stays small.
fn lattice_mdp<R: Rng>(rng: &mut R) -> FiniteMdp {
    let (ns, na) = (4, 2);
    let mut transitions = Vec::new();
    for x in 0..ns {
        for a in 0..na {
            let raw: Vec<f64> = (0..ns).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            for (next, w) in raw.into_iter().enumerate() {
                let reward = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                transitions.push((x, a, next, w / total, reward));
            }
        }
    }
    FiniteMdp::new(ns, na, 0.2, vec![false; ns], transitions).unwrap()
}

#[test]
fn fixed_point_does_not_depend_on_initialization() {
    let mut rng = seeded(10);
    for _ in 0..5 {
        let mdp = lattice_mdp(&mut rng);
        let policy = random_policy(4, 2, &mut rng);
        let from_zero =
            exact_distributional_fixed_point(&mdp, &policy, TableKind::State, 200, DEFAULT_MERGE_TOL).unwrap();
        let entries = (0..4).map(|_| common::random_distribution(&mut rng, 5)).collect();
        let initial = ValueDistributionTable::new(4, 1, entries).unwrap();
        let from_random =
            exact_distributional_fixed_point_from(&mdp, &policy, initial, 200, DEFAULT_MERGE_TOL).unwrap();
        let gap = maximal_wasserstein(&from_zero.table, &from_random.table, f64::INFINITY).unwrap();
        assert!(gap < 1e-5, "gap {gap}");
    }
}

#[test]
fn expected_qrtd_increment_vanishes_at_projected_fixed_point() {
    let mut rng = seeded(11);
    let n = 8;
    let taus: Vec<f64> = (0..n).map(|i| (2 * i + 1) as f64 / (2 * n) as f64).collect();
    for _ in 0..5 {
        let mdp = lattice_mdp(&mut rng);
        let policy = random_policy(4, 2, &mut rng);
        let fixed =
            exact_distributional_fixed_point(&mdp, &policy, TableKind::State, 200, DEFAULT_MERGE_TOL).unwrap();
        let theta: Vec<Vec<f64>> = (0..4)
            .map(|x| quantile_projection(fixed.table.get(x, 0), n).unwrap().locations().to_vec())
            .collect();
        for x in 0..4 {
            for (i, &tau) in taus.iter().enumerate() {
                let mut below = 0.0;
                for a in 0..2 {
                    for s in mdp.successors(x, a) {
                        let count = theta[s.next]
                            .iter()
                            .filter(|&&z| s.reward + mdp.gamma() * z < theta[x][i])
                            .count();
                        below += policy.prob(x, a) * s.prob * count as f64 / n as f64;
                    }
                }
                assert!((tau - below).abs() <= 0.5 / n as f64 + 1e-12, "state {x} i {i}: {tau} vs {below}");
            }
        }
    }
}

#[test]
fn gridworld_projection_error_shrinks_with_more_quantiles() {
    let world = build_windy_gridworld();
    let policy = policy_iteration(&world.mdp).unwrap();
    let fixed =
        exact_distributional_fixed_point(&world.mdp, &policy, TableKind::State, 5000, DEFAULT_MERGE_TOL).unwrap();
    let z = fixed.table.get(world.start, 0);
    let errors: Vec<f64> = [2, 4, 8, 16, 32, 64]
        .iter()
        .map(|&n| wasserstein(z, &quantile_projection(z, n).unwrap().to_finite(), 1.0).unwrap())
        .collect();
    assert!(errors.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errors:?}");
}

#[test]
fn learned_gridworld_quantiles_are_ordered() {
    let world = build_windy_gridworld();
    let policy = policy_iteration(&world.mdp).unwrap();
    let config = EvalConfig {
        algos: vec![Algorithm::Qrtd, Algorithm::QrtdAllPairs],
        ..EvalConfig::default()
    };
    let result = evaluate_seed(&world.mdp, &policy, world.start, &config, 0).unwrap();
    for run in &result.runs {
        let theta = run.quantiles.as_ref().unwrap().theta(world.start).to_vec();
        let mut sorted = theta.clone();
        sorted.sort_by(f64::total_cmp);
        let gap = theta.iter().zip(&sorted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // Single-sample updates leave inversions on the scale of the last step size.
        let tol = match run.algorithm {
            Algorithm::QrtdAllPairs => 1e-6,
            _ => config.schedule().rate(config.episodes),
        };
        assert!(gap <= tol, "{}: {theta:?}", run.algorithm.name());
    }
}

#[test]
fn sum_of_quantile_losses_is_minimized_by_the_projection() {
    let mut rng = seeded(12);
    for _ in 0..20 {
        let k = rng.random_range(1..8);
        let z: FiniteDistribution = common::random_distribution(&mut rng, k);
        let n = rng.random_range(1..6);
        let projection = quantile_projection(&z, n).unwrap();
        let span = z.max() - z.min();
        let step = span.max(1.0) * 1e-3;
        for (i, &theta) in projection.locations().iter().enumerate() {
            let tau = (2 * i + 1) as f64 / (2 * n) as f64;
            let objective = |t: f64| z.atoms().map(|(l, w)| w * qdrl::qreg::qr_loss(l - t, tau)).sum::<f64>();
            let steps = (span / step).ceil() as usize;
            let (best, best_value) = (0..=steps)
                .map(|k| z.min() + k as f64 * step)
                .map(|t| (t, objective(t)))
                .fold((f64::NAN, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
            assert!(objective(theta) <= best_value + 1e-12, "theta {theta} grid {best}");
            assert!((theta - best).abs() <= step + 1e-12 || (objective(best) - objective(theta)).abs() < 1e-12);
        }
    }
}
