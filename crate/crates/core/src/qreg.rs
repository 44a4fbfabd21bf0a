//! Quantile regression and quantile Huber losses.
//!
//! Residuals are `u = z - theta` (target minus estimate). Gradients are taken
//! with respect to `theta`, so a descent step is `theta -= lr * qr_grad(..)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{quantile_midpoints, wasserstein_p, FiniteDistribution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    /// Huber width; zero selects the plain quantile loss.
    pub kappa: f64,
}

impl LossConfig {
    pub fn new(tau: f64, kappa: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::invalid(format!("tau {tau} outside (0, 1)")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa {kappa} must be finite and >= 0")));
        }
        Ok(Self { tau, kappa })
    }

    pub fn loss(&self, u: f64) -> f64 {
        quantile_huber(u, self.tau, self.kappa)
    }

    pub fn grad(&self, u: f64) -> f64 {
        qr_grad(u, self.tau, self.kappa)
    }
}

#[inline]
fn below(u: f64) -> f64 {
    if u < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `rho_tau(u) = u (tau - 1[u < 0])`.
#[inline]
pub fn qr_loss(u: f64, tau: f64) -> f64 {
    u * (tau - below(u))
}

#[inline]
fn huber_unchecked(u: f64, kappa: f64) -> f64 {
    let a = u.abs();
    if a <= kappa {
        0.5 * u * u
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

pub fn huber(u: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::invalid(format!(
            "Huber width {kappa} must be positive; use qr_loss for kappa = 0"
        )));
    }
    Ok(huber_unchecked(u, kappa))
}

/// `|tau - 1[u < 0]| * L_kappa(u)`, reducing to [`qr_loss`] at `kappa = 0`.
#[inline]
pub fn quantile_huber(u: f64, tau: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        qr_loss(u, tau)
    } else {
        (tau - below(u)).abs() * huber_unchecked(u, kappa)
    }
}

/// d/dtheta of `quantile_huber(z - theta)`. At `u = 0` the `1[u < 0] = 0`
/// branch is used, giving `-tau` for the plain quantile loss.
#[inline]
pub fn qr_grad(u: f64, tau: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return -(tau - below(u));
    }
    let weight = (tau - below(u)).abs();
    let slope = if u.abs() <= kappa { u } else { kappa * u.signum() };
    -weight * slope
}

/// Midpoint of the subdifferential: identical to [`qr_grad`] except at the
/// kink `u = 0` of the plain quantile loss, where it averages both one-sided
/// derivatives.
#[inline]
pub fn qr_grad_central(u: f64, tau: f64, kappa: f64) -> f64 {
    if kappa == 0.0 && u == 0.0 {
        -(tau - 0.5)
    } else {
        qr_grad(u, tau, kappa)
    }
}

/// Step-size schedules indexed from `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant { rate: f64 },
    /// `scale / sqrt(t)`
    InvSqrt { scale: f64 },
    /// `initial * 2^-(floor((t - 1) / period))`
    Halving { initial: f64, period: usize },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::InvSqrt { scale: 1.0 }
    }
}

impl LrSchedule {
    pub fn rate(&self, t: usize) -> f64 {
        let t = t.max(1);
        match *self {
            LrSchedule::Constant { rate } => rate,
            LrSchedule::InvSqrt { scale } => scale / (t as f64).sqrt(),
            LrSchedule::Halving { initial, period } => {
                let halvings = (t - 1) / period.max(1);
                initial * 0.5f64.powi(halvings.min(1074) as i32)
            }
        }
    }
}

/// Stochastic quantile estimation: `theta -= lr_t * qr_grad(z_t - theta, tau, 0)`.
pub fn sgd_quantile<R: Rng + ?Sized>(
    mut sampler: impl FnMut(&mut R) -> f64,
    tau: f64,
    steps: usize,
    schedule: LrSchedule,
    init: f64,
    rng: &mut R,
) -> f64 {
    let mut theta = init;
    for t in 1..=steps {
        let z = sampler(rng);
        theta -= schedule.rate(t) * qr_grad(z - theta, tau, 0.0);
    }
    theta
}

/// Derivative of `W_p(sample, U(theta))` with respect to `theta[k]`, where
/// `U(theta)` is the uniform mixture over sorted, distinct `theta` and atom
/// `k` owns the levels `(k/N, (k+1)/N]`. Where the metric has a kink the
/// average of the one-sided derivatives is returned.
pub fn wasserstein_grad_atom(
    sample: &FiniteDistribution,
    theta: &[f64],
    k: usize,
    p: f64,
) -> Result<f64> {
    if k >= theta.len() {
        return Err(Error::invalid(format!("atom index {k} out of range")));
    }
    if theta.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("theta must be strictly increasing"));
    }
    let n = theta.len() as f64;
    let (lo, hi) = (k as f64 / n, (k + 1) as f64 / n);
    let mut inner = 0.0;
    let mut prev: f64 = 0.0;
    for (&c, &loc) in sample.cumulative().iter().zip(sample.locations()) {
        let len = c.min(hi) - prev.max(lo);
        if len > 0.0 {
            let d = theta[k] - loc;
            let sign = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            inner += len * sign * if p == 1.0 { 1.0 } else { d.abs().powf(p - 1.0) };
        }
        prev = c;
    }
    if p == 1.0 {
        return Ok(inner);
    }
    let uniform = FiniteDistribution::uniform(theta)?;
    let w = wasserstein_p(sample, &uniform, p)?;
    Ok(if w == 0.0 { 0.0 } else { w.powf(1.0 - p) * inner })
}

/// Sample-gradient bias report for `Z = U{1..N}` with `theta = (1, ..., N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub trials: usize,
    pub wass_grad_mean: f64,
    pub wass_grad_stderr: f64,
    pub qr_grad_mean: f64,
    pub qr_grad_stderr: f64,
}

impl BiasReport {
    pub const CSV_HEADER: &'static str =
        "N,m,p,trials,wass_grad_mean,wass_grad_stderr,qr_grad_mean,qr_grad_stderr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n,
            self.m,
            self.p,
            self.trials,
            self.wass_grad_mean,
            self.wass_grad_stderr,
            self.qr_grad_mean,
            self.qr_grad_stderr
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }

    /// The Wasserstein sample gradient is significantly negative.
    pub fn wasserstein_biased(&self) -> bool {
        self.wass_grad_mean < 0.0 && self.wass_grad_mean.abs() > 3.0 * self.wass_grad_stderr
    }

    /// The quantile-regression sample gradient is consistent with zero.
    pub fn quantile_unbiased(&self) -> bool {
        self.qr_grad_mean.abs() <= 3.0 * self.qr_grad_stderr
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo estimate of the first-atom sample gradients of the expected
/// Wasserstein loss and of the quantile-regression loss, both evaluated at the
/// true minimizer. Each trial draws `m` samples from `Z`.
pub fn biased_gradient_demo<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    p: f64,
    trials: usize,
    rng: &mut R,
) -> Result<BiasReport> {
    if n == 0 || m == 0 || trials == 0 {
        return Err(Error::invalid("N, m and trials must all be positive"));
    }
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::invalid(format!("order p = {p} must be finite and >= 1")));
    }
    let theta: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let tau1 = quantile_midpoints(n)?.midpoints()[0];
    let mut wass = Vec::with_capacity(trials);
    let mut qr = Vec::with_capacity(trials);
    let mut draws = vec![0.0; m];
    for _ in 0..trials {
        for d in draws.iter_mut() {
            *d = rng.random_range(1..=n) as f64;
        }
        let sample = FiniteDistribution::from_samples(&draws)?;
        wass.push(wasserstein_grad_atom(&sample, &theta, 0, p)?);
        let g: f64 = draws
            .iter()
            .map(|&z| qr_grad_central(z - theta[0], tau1, 0.0))
            .sum::<f64>()
            / m as f64;
        qr.push(g);
    }
    let (wass_grad_mean, wass_grad_stderr) = mean_stderr(&wass);
    let (qr_grad_mean, qr_grad_stderr) = mean_stderr(&qr);
    Ok(BiasReport {
        n,
        m,
        p,
        trials,
        wass_grad_mean,
        wass_grad_stderr,
        qr_grad_mean,
        qr_grad_stderr,
    })
}
