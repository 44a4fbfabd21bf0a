use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qdrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdrl")).args(args).output().expect("binary runs")
}

fn qdrl_in(out: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    qdrl(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn counterexample_reports_factor_two_at_order_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = qdrl_in(dir.path(), &["verify", "counterexample"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("p=1: before 0.500000, after 1.000000, factor 2.000000"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report_counterexample.json")).unwrap()).unwrap();
    assert_eq!(report["violations"], 0);
    assert_eq!(report["details"][0]["factor"], 2.0);
}

#[test]
fn contraction_check_has_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = qdrl_in(dir.path(), &["verify", "contraction", "--trials", "10000", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report_contraction.json")).unwrap()).unwrap();
    assert_eq!(report["trials"], 10000);
    assert_eq!(report["violations"], 0);
}

#[test]
fn verify_all_smoke_run_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    let o = qdrl_in(dir.path(), &["verify", "all", "--trials", "10"]);
    assert!(start.elapsed().as_secs_f64() < 1.0);
    // Ten bias trials may be too few to show the bias significantly.
    assert!(matches!(o.status.code(), Some(0 | 1)));
    for name in ["contraction", "dirac", "counterexample", "bias", "winf-identity"] {
        assert!(dir.path().join(format!("report_{name}.json")).exists(), "{name}");
    }
}

#[test]
fn bias_check_passes_with_enough_trials() {
    let dir = tempfile::tempdir().unwrap();
    let o = qdrl_in(dir.path(), &["verify", "bias"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn zero_episodes_gives_header_only_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let o = qdrl_in(dir.path(), &["gridworld-eval", "--episodes", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(dir.path().join("curves.csv")).unwrap(), "episode,algo,seed,sq_mean_err,w1_err\n");
    assert_eq!(fs::read_to_string(dir.path().join("zdist.csv")).unwrap(), "episode,i,tau,theta\n");
}

#[test]
fn default_run_has_full_curves_per_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let o = qdrl_in(dir.path(), &["gridworld-eval", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert!(!text.contains('\r'));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|r| r.split(',').nth(1) == Some("td0")).count(), 10_000);
    assert_eq!(rows.iter().filter(|r| r.split(',').nth(1) == Some("qrtd_all_pairs")).count(), 10_000);
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ground_truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seeds"][0]["rollouts"], 1000);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = qdrl_in(dir.path(), &["gridworld-eval", "--episodes", "300", "--seed", "3,4"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["curves.csv", "zdist.csv", "ground_truth.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn config_file_selects_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("eval.json");
    fs::write(&config, r#"{"N": 4, "episodes": 20, "seeds": [9], "algos": ["qrtd"], "mc_rollouts": 50}"#).unwrap();
    let o = qdrl_in(dir.path(), &["gridworld-eval", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.lines().skip(1).all(|l| l.starts_with(|c: char| c.is_ascii_digit()) && l.contains(",qrtd,9,")));
    let zdist = fs::read_to_string(dir.path().join("zdist.csv")).unwrap();
    assert_eq!(zdist.lines().nth(1).unwrap().split(',').nth(2), Some("0.125"));
}

#[test]
fn chain_training_finds_optimal_policy_on_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = qdrl_in(dir.path(), &["train-qrdqn", "--env", "chain", "--seed", "0,1,2"]);
    assert_eq!(o.status.code(), Some(0));
    for kappa in ["0", "1"] {
        let summary: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join(format!("policy_kappa{kappa}.json"))).unwrap(),
        )
        .unwrap();
        let seeds = summary["seeds"].as_array().unwrap();
        assert_eq!(seeds.len(), 3);
        assert!(seeds.iter().all(|s| s["matches_optimal"] == true));
        let curves = fs::read_to_string(dir.path().join(format!("curves_kappa{kappa}.csv"))).unwrap();
        assert!(curves.starts_with("step,seed,kappa,greedy_return,loss\n"));
        assert!(dir.path().join(format!("params_kappa{kappa}_seed2.json")).exists());
    }
}

#[test]
fn kappa_override_tags_file_names() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("agent.json");
    fs::write(&config, r#"{"total_steps": 300, "learning_starts": 50, "eval_every": 100}"#).unwrap();
    let o = qdrl_in(
        dir.path(),
        &["train-qrdqn", "--kappa", "0", "--seed", "1", "--config", config.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("curves_kappa0.csv").exists());
    assert!(!dir.path().join("curves_kappa1.csv").exists());
    let curves = fs::read_to_string(dir.path().join("curves_kappa0.csv")).unwrap();
    assert_eq!(curves.lines().count(), 4);
}

#[test]
fn argument_errors_exit_two() {
    let o = qdrl(&["train-qrdqn", "--env", "atari"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("chain") && err.contains("gridworld"));
    assert_eq!(qdrl(&["verify", "everything"]).status.code(), Some(2));
    assert_eq!(qdrl(&["verify", "dirac", "--trials", "0"]).status.code(), Some(2));
    let threads = Command::new(env!("CARGO_BIN_EXE_qdrl"))
        .args(["verify", "counterexample"])
        .env("QDRL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn io_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let o = qdrl(&["verify", "counterexample", "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("plain"));
    let missing = dir.path().join("missing.json");
    let o = qdrl_in(dir.path(), &["gridworld-eval", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
