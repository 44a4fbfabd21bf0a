//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use qdrl::dist::FiniteDistribution;
use rand::Rng;

/// Random distribution with `k` atoms (before merging), with either
/// Dirichlet or uniform weights.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, k: usize) -> FiniteDistribution {
    let uniform = rng.random_bool(0.5);
    let raw: Vec<f64> = (0..k)
        .map(|_| if uniform { 1.0 } else { -(1.0 - rng.random::<f64>()).ln() })
        .collect();
    let total: f64 = raw.iter().sum();
    let atoms: Vec<(f64, f64)> = raw
        .into_iter()
        .map(|w| (rng.random_range(-10.0..10.0), w / total))
        .collect();
    FiniteDistribution::new(atoms).unwrap()
}

/// `W1` as the area between the two CDFs, `int |F(x) - G(x)| dx`.
pub fn w1_by_cdf_area(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut xs: Vec<f64> = a.iter().chain(b).map(|&(x, _)| x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let cdf = |atoms: &[(f64, f64)], x: f64| -> f64 { atoms.iter().filter(|&&(l, _)| l <= x).map(|&(_, w)| w).sum() };
    xs.windows(2)
        .map(|w| (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0]))
        .sum()
}

/// `int_lo^hi |F^-1(w) - theta| dw`, summing the overlap of each atom's
/// cumulative-weight interval with `[lo, hi]`.
pub fn quantile_interval_cost(atoms: &[(f64, f64)], lo: f64, hi: f64, theta: f64) -> f64 {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut below = 0.0;
    let mut total = 0.0;
    for (x, w) in sorted {
        let (a, b) = (below, below + w);
        below = b;
        let overlap = (b.min(hi) - a.max(lo)).max(0.0);
        total += overlap * (x - theta).abs();
    }
    total
}

pub fn uniform_atoms(locations: &[f64]) -> Vec<(f64, f64)> {
    let w = 1.0 / locations.len() as f64;
    locations.iter().map(|&l| (l, w)).collect()
}
