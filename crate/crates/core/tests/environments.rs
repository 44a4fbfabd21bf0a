use qdrl::mdp::{build_windy_gridworld, exact_value, policy_iteration, Policy};
use qdrl::oracle::{monte_carlo_returns, random_mdp, random_policy};
use qdrl::rng::seeded;
use rand::Rng;

/// Upper `1 - 1e-3` chi-square quantile via the Wilson-Hilferty approximation.
fn chi_square_critical(df: usize) -> f64 {
    let k = df as f64;
    let z = 3.0902;
    let c = 2.0 / (9.0 * k);
    k * (1.0 - c + z * c.sqrt()).powi(3)
}

#[test]
fn exact_value_satisfies_bellman_equation_on_random_mdps() {
    let mut rng = seeded(1);
    for _ in 0..50 {
        let ns = rng.random_range(2..=10);
        let na = rng.random_range(1..=4);
        let mdp = random_mdp(ns, na, 0.9, false, rng.random_bool(0.5), &mut rng).unwrap();
        let policy = random_policy(ns, na, &mut rng);
        let q = exact_value(&mdp, &policy).unwrap();
        assert!(q.bellman_residual(&mdp, &policy) < 1e-9);
    }
}

#[test]
fn policy_iteration_is_greedy_for_its_own_values() {
    let mut rng = seeded(2);
    for _ in 0..50 {
        let ns = rng.random_range(2..=10);
        let na = rng.random_range(2..=4);
        let mdp = random_mdp(ns, na, 0.9, false, false, &mut rng).unwrap();
        let policy = policy_iteration(&mdp).unwrap();
        let q = exact_value(&mdp, &policy).unwrap();
        let actions = policy.actions().expect("deterministic");
        for (x, &a) in actions.iter().enumerate() {
            let best = q.q_row(x).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(q.q(x, a) >= best - 1e-9, "state {x}");
        }
    }
}

#[test]
fn sampled_transitions_match_the_transition_tensor() {
    let world = build_windy_gridworld();
    let mdp = &world.mdp;
    let mut rng = seeded(3);
    let draws = 1_000_000;
    for a in 0..mdp.n_actions() {
        let mut counts = vec![0usize; mdp.n_states()];
        for _ in 0..draws {
            counts[mdp.sample_transition(world.start, a, &mut rng).unwrap().next_state] += 1;
        }
        let support: Vec<usize> = (0..mdp.n_states())
            .filter(|&y| mdp.transition_prob(world.start, a, y) > 0.0)
            .collect();
        assert!(counts
            .iter()
            .enumerate()
            .all(|(y, &c)| c == 0 || support.contains(&y)));
        let stat: f64 = support
            .iter()
            .map(|&y| {
                let expected = draws as f64 * mdp.transition_prob(world.start, a, y);
                (counts[y] as f64 - expected).powi(2) / expected
            })
            .sum();
        if support.len() > 1 {
            assert!(stat < chi_square_critical(support.len() - 1), "action {a}: {stat}");
        }
    }
}

#[test]
fn gridworld_policy_beats_random_deterministic_policies() {
    let world = build_windy_gridworld();
    let mdp = &world.mdp;
    let best = exact_value(mdp, &policy_iteration(mdp).unwrap()).unwrap().v(world.start);
    let mut rng = seeded(4);
    for _ in 0..100 {
        let actions: Vec<usize> = (0..mdp.n_states()).map(|_| rng.random_range(0..mdp.n_actions())).collect();
        let policy = Policy::deterministic(mdp.n_actions(), &actions).unwrap();
        let v = exact_value(mdp, &policy).unwrap().v(world.start);
        assert!(best >= v - 1e-12, "{best} < {v}");
    }
}

#[test]
fn gridworld_exact_value_matches_monte_carlo() {
    let world = build_windy_gridworld();
    let policy = policy_iteration(&world.mdp).unwrap();
    let v = exact_value(&world.mdp, &policy).unwrap().v(world.start);
    let returns = monte_carlo_returns(&world.mdp, &policy, world.start, 100_000, &mut seeded(5)).unwrap();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - v).abs() < 2.0 * se, "mc {mean} exact {v} se {se}");
}

#[test]
fn gridworld_returns_are_multimodal() {
    let world = build_windy_gridworld();
    let policy = policy_iteration(&world.mdp).unwrap();
    let returns = monte_carlo_returns(&world.mdp, &policy, world.start, 10_000, &mut seeded(6)).unwrap();
    let lo = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = 50;
    let mut hist = vec![0usize; bins];
    for r in &returns {
        let i = (((r - lo) / (hi - lo)) * bins as f64) as usize;
        hist[i.min(bins - 1)] += 1;
    }
    // A mode is a bin holding at least 1% of the samples that beats both
    // neighbours (plateaus count once, at their left edge).
    let floor = returns.len() / 100;
    let modes = (0..bins)
        .filter(|&i| {
            let left = if i == 0 { 0 } else { hist[i - 1] };
            let right = hist[i + 1..].iter().copied().find(|&c| c != hist[i]).unwrap_or(0);
            hist[i] >= floor && hist[i] > left && hist[i] > right
        })
        .count();
    assert!(modes >= 2, "histogram {hist:?}");
}
