use clap::ValueEnum;
use serde::Serialize;

use qdrl::oracle::{
    verify_non_expansion_counterexample, verify_projected_contraction, verify_single_dirac_case,
    verify_winf_identity, CounterexampleRow, Report,
};
use qdrl::qreg::{biased_gradient_demo, BiasReport};
use qdrl::rng::{family_stream, stream_rng};

use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, write_json};
use crate::Common;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Contraction,
    Dirac,
    Counterexample,
    Bias,
    WinfIdentity,
    All,
}

const CHECKS: [Which; 5] = [Which::Contraction, Which::Dirac, Which::Counterexample, Which::Bias, Which::WinfIdentity];

impl Which {
    fn name(self) -> &'static str {
        match self {
            Which::Contraction => "contraction",
            Which::Dirac => "dirac",
            Which::Counterexample => "counterexample",
            Which::Bias => "bias",
            Which::WinfIdentity => "winf-identity",
            Which::All => "all",
        }
    }
}

pub const DEFAULT_TRIALS: usize = 10_000;
pub const COUNTEREXAMPLE_ORDERS: [f64; 4] = [1.0, 1.5, 2.0, 4.0];

#[derive(Serialize)]
struct CheckReport<T: Serialize> {
    check: &'static str,
    seed: u64,
    #[serde(flatten)]
    report: Report,
    details: T,
}

fn run_check(which: Which, seed: u64, trials: usize, common: &Common) -> CliResult<usize> {
    // Each check draws from its own sub-stream of the seed.
    let index = CHECKS.iter().position(|&c| c == which).expect("single check") as u32;
    let mut rng = stream_rng(seed, family_stream(100, index));
    let name = which.name();
    let (report, details) = match which {
        Which::Contraction => (verify_projected_contraction(trials, &mut rng), serde_json::Value::Null),
        Which::Dirac => (verify_single_dirac_case(trials, &mut rng), serde_json::Value::Null),
        Which::WinfIdentity => (verify_winf_identity(trials, 1e-12, &mut rng), serde_json::Value::Null),
        Which::Counterexample => {
            let (report, rows) = verify_non_expansion_counterexample(&COUNTEREXAMPLE_ORDERS)?;
            for CounterexampleRow { p, d_before, d_after, factor } in &rows {
                println!("counterexample p={p}: before {d_before:.6}, after {d_after:.6}, factor {factor:.6}");
            }
            (report, serde_json::to_value(&rows).map_err(qdrl::Error::from)?)
        }
        Which::Bias => {
            let bias: BiasReport = biased_gradient_demo(3, 3, 1.0, trials, &mut rng)?;
            println!(
                "bias: Wasserstein gradient {:.5} +- {:.5}, quantile gradient {:.5} +- {:.5}",
                bias.wass_grad_mean, bias.wass_grad_stderr, bias.qr_grad_mean, bias.qr_grad_stderr
            );
            let ok = bias.wasserstein_biased() && bias.quantile_unbiased();
            let report = Report {
                trials: bias.trials,
                violations: usize::from(!ok),
                max_ratio: 0.0,
                failing_instances: Vec::new(),
            };
            (report, serde_json::to_value(bias).map_err(qdrl::Error::from)?)
        }
        Which::All => unreachable!("expanded by the caller"),
    };
    let extreme = match which {
        Which::Bias => String::new(),
        Which::WinfIdentity => format!(", max gap {:.3e}", report.max_ratio),
        _ => format!(", max ratio {:.6}", report.max_ratio),
    };
    println!("{name}: {} trials, {} violations{extreme}", report.trials, report.violations);
    let violations = report.violations;
    write_json(
        &common.out,
        &format!("report_{name}.json"),
        &CheckReport { check: name, seed, report, details },
    )?;
    Ok(violations)
}

pub fn run(which: Which, common: &Common, trials: Option<usize>) -> CliResult<()> {
    let seed = match common.seed.as_deref() {
        None => 0,
        Some([s]) => *s,
        Some(_) => return Err(CliError::Argument("verify takes a single seed".into())),
    };
    if common.config.is_some() {
        return Err(CliError::Argument("verify does not read a config file".into()));
    }
    let trials = trials.unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return Err(CliError::Argument("--trials must be positive".into()));
    }
    ensure_dir(&common.out)?;
    let checks: Vec<Which> = if which == Which::All { CHECKS.to_vec() } else { vec![which] };
    let mut violations = 0;
    for check in checks {
        violations += run_check(check, seed, trials, common)?;
    }
    if violations > 0 {
        return Err(CliError::Violation(violations));
    }
    Ok(())
}
