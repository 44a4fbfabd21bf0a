mod common;

use proptest::prelude::*;
use qdrl::dist::{
    c51_probabilities, maximal_wasserstein, quantile_projection, wasserstein, FiniteDistribution,
    ValueDistributionTable,
};
use qdrl::mdp::Policy;
use qdrl::oracle::{apply_distributional_bellman, random_mdp, random_policy};
use qdrl::qreg::quantile_huber;
use qdrl::rng::seeded;

const ORDERS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];

fn atoms(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-20i32..20, 1u32..10), 1..=max).prop_map(|raw| {
        let total: u32 = raw.iter().map(|r| r.1).sum();
        raw.into_iter()
            .map(|(l, w)| (l as f64 * 0.5, w as f64 / total as f64))
            .collect()
    })
}

fn dist(max: usize) -> impl Strategy<Value = FiniteDistribution> {
    atoms(max).prop_map(|a| FiniteDistribution::new(a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn metric_axioms(a in dist(5), b in dist(5), c in dist(5)) {
        for p in ORDERS {
            let ab = wasserstein(&a, &b, p).unwrap();
            let ba = wasserstein(&b, &a, p).unwrap();
            let ac = wasserstein(&a, &c, p).unwrap();
            let bc = wasserstein(&b, &c, p).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert_eq!(wasserstein(&a, &a, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn order_monotone(a in dist(6), b in dist(6)) {
        let values: Vec<f64> = ORDERS.iter().map(|&p| wasserstein(&a, &b, p).unwrap()).collect();
        for w in values.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-9, "{:?}", values);
        }
    }

    #[test]
    fn w1_agrees_with_cdf_area(a in atoms(6), b in atoms(6)) {
        let (da, db) = (FiniteDistribution::new(a.clone()).unwrap(), FiniteDistribution::new(b.clone()).unwrap());
        let expected = common::w1_by_cdf_area(&a, &b);
        prop_assert!((wasserstein(&da, &db, 1.0).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn canonical_form_is_order_invariant(a in atoms(6)) {
        let mut reversed = a.clone();
        reversed.reverse();
        let (x, y) = (FiniteDistribution::new(a).unwrap(), FiniteDistribution::new(reversed).unwrap());
        prop_assert_eq!(&x, &y);
        prop_assert!(x.locations().windows(2).all(|w| w[0] < w[1]));
        prop_assert!((x.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn distribution_json_round_trip(d in dist(6)) {
        let text = serde_json::to_string(&d).unwrap();
        prop_assert_eq!(serde_json::from_str::<FiniteDistribution>(&text).unwrap(), d);
    }

    #[test]
    fn projection_is_idempotent_and_sorted(d in dist(8), n in 1usize..8) {
        let q = quantile_projection(&d, n).unwrap();
        prop_assert!(q.locations().windows(2).all(|w| w[0] <= w[1]));
        let again = quantile_projection(&q.to_finite(), n).unwrap();
        prop_assert_eq!(again.locations(), q.locations());
    }

    #[test]
    fn c51_preserves_mass_and_interior_mean(d in dist(6)) {
        let support: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.5).collect();
        let probs = c51_probabilities(&d, &support).unwrap();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let mean: f64 = probs.iter().zip(&support).map(|(p, z)| p * z).sum();
        prop_assert!((mean - d.mean()).abs() <= 1e-12);
    }

    #[test]
    fn quantile_huber_is_convex(u1 in -5.0f64..5.0, u2 in -5.0f64..5.0, tau in 0.01f64..0.99, kappa in 0.0f64..2.0) {
        let mid = quantile_huber(0.5 * (u1 + u2), tau, kappa);
        let chord = 0.5 * (quantile_huber(u1, tau, kappa) + quantile_huber(u2, tau, kappa));
        prop_assert!(mid <= chord + 1e-12);
    }

    #[test]
    fn backup_preserves_mass(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mdp = random_mdp(4, 2, 0.9, false, true, &mut rng).unwrap();
        let policy = random_policy(4, 2, &mut rng);
        let entries = (0..8).map(|_| common::random_distribution(&mut rng, 3)).collect();
        let table = ValueDistributionTable::new(4, 2, entries).unwrap();
        let next = apply_distributional_bellman(&mdp, &policy, &table, 0.0).unwrap();
        for d in next.entries() {
            prop_assert!((d.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn maximal_metric_bounded_by_sup_order(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let make = |rng: &mut qdrl::rng::Rng| {
            let entries = (0..6).map(|_| common::random_distribution(rng, 4)).collect();
            ValueDistributionTable::new(3, 2, entries).unwrap()
        };
        let (z1, z2) = (make(&mut rng), make(&mut rng));
        let sup = maximal_wasserstein(&z1, &z2, f64::INFINITY).unwrap();
        for p in [1.0, 2.0, 4.0] {
            prop_assert!(maximal_wasserstein(&z1, &z2, p).unwrap() <= sup + 1e-9);
        }
    }
}

#[test]
fn uniform_policy_backup_on_single_column_matches_mixture() {
    let mut rng = seeded(4);
    let mdp = random_mdp(3, 2, 0.8, false, false, &mut rng).unwrap();
    let policy = Policy::uniform(3, 2);
    let entries: Vec<FiniteDistribution> = (0..3).map(|_| common::random_distribution(&mut rng, 3)).collect();
    let state_table = ValueDistributionTable::new(3, 1, entries.clone()).unwrap();
    // A state-action table whose every column equals the state entry.
    let sa_entries = entries.iter().flat_map(|d| [d.clone(), d.clone()]).collect();
    let sa_table = ValueDistributionTable::new(3, 2, sa_entries).unwrap();
    let by_state = apply_distributional_bellman(&mdp, &policy, &state_table, 0.0).unwrap();
    let by_pair = apply_distributional_bellman(&mdp, &policy, &sa_table, 0.0).unwrap();
    for x in 0..3 {
        let atoms: Vec<(f64, f64)> = (0..2)
            .flat_map(|a| by_pair.get(x, a).atoms().map(|(l, w)| (l, 0.5 * w)).collect::<Vec<_>>())
            .collect();
        let mixture = FiniteDistribution::new(atoms).unwrap();
        assert!(wasserstein(&mixture, by_state.get(x, 0), f64::INFINITY).unwrap() < 1e-9);
    }
}
