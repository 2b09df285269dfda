//! End-to-end harness behavior: experiment execution and file outputs,
//! metric determinism, budget accounting, sweeps, and the CLI contract.

use std::path::PathBuf;
use std::process::Command;

use vadmm::harness::config::{ExperimentConfig, HyperConfig, LossScaleConfig, PrivacyConfig, Role};
use vadmm::harness::fixtures::{a9a_200, write_libsvm_file};
use vadmm::harness::metrics::{read_metrics_csv, CSV_HEADER};
use vadmm::harness::{
    baseline_centralized, mean_by_multiplier, noise_sweep, run_distributed_loopback, run_experiment,
    BaselineOptions,
};
use vadmm::privacy::total_budget;

const SEED: u64 = 1;

fn fixture_files(dir: &std::path::Path) -> (PathBuf, PathBuf) {
    let pair = a9a_200(SEED);
    let train = dir.join("a9a-200.train.libsvm");
    let test = dir.join("a9a-200.test.libsvm");
    write_libsvm_file(&pair.train, &train).unwrap();
    write_libsvm_file(&pair.test, &test).unwrap();
    (train, test)
}

fn local_config(dir: &std::path::Path, out_name: &str) -> ExperimentConfig {
    let (train_path, test_path) = fixture_files(dir);
    ExperimentConfig {
        train_path,
        test_path,
        partition: vec![66, 57],
        hyper: HyperConfig { rho: Some(1.0), lambda: Some(0.02), max_epochs: 30, lyapunov_tol: None, seed: SEED },
        privacy: None,
        role: Role::LocalSim,
        party_id: None,
        listen: None,
        connect: None,
        output_csv: dir.join(out_name),
        force_dim: None,
        row_normalize: None,
        loss_scale: LossScaleConfig::One,
        io_timeout_secs: 10,
    }
}

fn with_privacy(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.privacy = Some(PrivacyConfig {
        epsilon: 1.0,
        delta: 1e-2,
        delta_prime: 1e-2,
        b1: 2.0,
        c1: 1.0,
        sigma_multiplier: 1.0,
        seed: None,
    });
    cfg.hyper.rho = Some(4.0);
    cfg
}

#[test]
fn local_sim_writes_csv_manifest_and_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = local_config(dir.path(), "run.csv");
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.metrics.len(), 30);

    let text = std::fs::read_to_string(&cfg.output_csv).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    let rows = read_metrics_csv(&cfg.output_csv).unwrap();
    assert_eq!(rows.len(), 30);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.epoch, i + 1, "epochs strictly increasing");
        assert!(r.train_objective.is_finite() && r.test_log_loss.is_finite());
    }
    // The objective trends down over the run.
    assert!(rows.last().unwrap().train_objective < rows[0].train_objective * 0.5);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["partition"], serde_json::json!([66, 57]));
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);

    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.model.json")).unwrap()).unwrap();
    assert_eq!(model["x"].as_array().unwrap().len(), 2);
    assert_eq!(model["x"][0].as_array().unwrap().len(), 66);
}

#[test]
fn reruns_are_identical_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_a = with_privacy(local_config(dir.path(), "a.csv"));
    let mut cfg_b = cfg_a.clone();
    cfg_b.output_csv = dir.path().join("b.csv");
    run_experiment(&cfg_a).unwrap();
    run_experiment(&cfg_b).unwrap();
    let a = read_metrics_csv(&cfg_a.output_csv).unwrap();
    let b = read_metrics_csv(&cfg_b.output_csv).unwrap();
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.epoch, rb.epoch);
        assert_eq!(ra.train_objective.to_bits(), rb.train_objective.to_bits());
        assert_eq!(ra.test_log_loss.to_bits(), rb.test_log_loss.to_bits());
        assert_eq!(ra.test_accuracy.to_bits(), rb.test_accuracy.to_bits());
        assert_eq!(ra.primal_residual.to_bits(), rb.primal_residual.to_bits());
        assert_eq!(ra.lyapunov.to_bits(), rb.lyapunov.to_bits());
        assert_eq!(ra.epsilon_spent.to_bits(), rb.epsilon_spent.to_bits());
    }
}

#[test]
fn reported_budget_recomputes_from_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_privacy(local_config(dir.path(), "dp.csv"));
    run_experiment(&cfg).unwrap();
    let rows = read_metrics_csv(&cfg.output_csv).unwrap();
    let p = cfg.privacy.unwrap();
    for r in &rows {
        let (eps, _) = total_budget(p.epsilon, p.delta, r.epoch, p.delta_prime);
        assert_eq!(r.epsilon_spent.to_bits(), eps.to_bits(), "epoch {}", r.epoch);
    }
    // Strictly growing spend.
    for w in rows.windows(2) {
        assert!(w[1].epsilon_spent > w[0].epsilon_spent);
    }
}

#[test]
fn distributed_loopback_matches_local_sim_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let local = local_config(dir.path(), "local.csv");
    let mut dist = local.clone();
    dist.output_csv = dir.path().join("dist.csv");
    run_experiment(&local).unwrap();
    run_distributed_loopback(&dist).unwrap();

    let a = read_metrics_csv(&local.output_csv).unwrap();
    let b = read_metrics_csv(&dist.output_csv).unwrap();
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.train_objective.to_bits(), rb.train_objective.to_bits());
        assert_eq!(ra.test_log_loss.to_bits(), rb.test_log_loss.to_bits());
        assert_eq!(ra.test_accuracy.to_bits(), rb.test_accuracy.to_bits());
        assert_eq!(ra.primal_residual.to_bits(), rb.primal_residual.to_bits());
        assert_eq!(ra.lyapunov.to_bits(), rb.lyapunov.to_bits());
        assert_eq!(ra.epsilon_spent.to_bits(), rb.epsilon_spent.to_bits());
    }
}

#[test]
fn private_distributed_loopback_matches_local_sim() {
    let dir = tempfile::tempdir().unwrap();
    let local = with_privacy(local_config(dir.path(), "dp_local.csv"));
    let mut dist = local.clone();
    dist.output_csv = dir.path().join("dp_dist.csv");
    run_experiment(&local).unwrap();
    run_distributed_loopback(&dist).unwrap();
    let a = read_metrics_csv(&local.output_csv).unwrap();
    let b = read_metrics_csv(&dist.output_csv).unwrap();
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.test_log_loss.to_bits(), rb.test_log_loss.to_bits());
        assert_eq!(ra.lyapunov.to_bits(), rb.lyapunov.to_bits());
    }
}

#[test]
fn sweep_has_one_row_per_cell_and_zero_multiplier_matches_rerun() {
    let pair = a9a_200(SEED);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = with_privacy(local_config(dir.path(), "sweep.csv"));
    cfg.hyper.max_epochs = 10;
    let multipliers = [0.0, 1.0, 2.0];
    let rows = noise_sweep(&cfg, &pair.train, &pair.test, &multipliers, 3).unwrap();
    assert_eq!(rows.len(), multipliers.len() * 3);

    // The zero-noise cells equal an independent zero-multiplier run.
    let mut zero_cfg = cfg.clone();
    zero_cfg.privacy.as_mut().unwrap().sigma_multiplier = 0.0;
    let prep = vadmm::harness::prepare_from_data(&zero_cfg, pair.train.clone(), pair.test.clone()).unwrap();
    let (metrics, _) = vadmm::harness::execute_local(&prep).unwrap();
    let expected = metrics.last().unwrap().test_log_loss;
    let zero_row = rows.iter().find(|r| r.multiplier == 0.0 && r.seed == SEED).unwrap();
    assert_eq!(zero_row.final_test_log_loss.to_bits(), expected.to_bits());

    let means = mean_by_multiplier(&rows, &multipliers);
    assert_eq!(means.len(), 3);
}

#[test]
fn sweep_requires_a_privacy_block() {
    let pair = a9a_200(SEED);
    let dir = tempfile::tempdir().unwrap();
    let cfg = local_config(dir.path(), "x.csv");
    assert!(noise_sweep(&cfg, &pair.train, &pair.test, &[0.0], 1).is_err());
}

#[test]
fn train_test_dimension_mismatch_is_resolved_by_widening() {
    let dir = tempfile::tempdir().unwrap();
    // Test file whose max feature index is below the train file's.
    std::fs::write(dir.path().join("train.libsvm"), "+1 1:1 4:1\n-1 2:1 3:1\n+1 1:1 2:1\n-1 3:1 4:1\n").unwrap();
    std::fs::write(dir.path().join("test.libsvm"), "+1 1:1\n-1 2:1\n").unwrap();
    let cfg = ExperimentConfig {
        train_path: dir.path().join("train.libsvm"),
        test_path: dir.path().join("test.libsvm"),
        partition: vec![2, 2],
        hyper: HyperConfig { rho: Some(1.0), lambda: Some(0.1), max_epochs: 3, lyapunov_tol: None, seed: 0 },
        privacy: None,
        role: Role::LocalSim,
        party_id: None,
        listen: None,
        connect: None,
        output_csv: dir.path().join("out.csv"),
        force_dim: None,
        row_normalize: None,
        loss_scale: LossScaleConfig::One,
        io_timeout_secs: 10,
    };
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.metrics.len(), 3);
}

#[test]
fn centralized_reference_reaches_gradient_tolerance_on_the_full_fixture() {
    let pair = vadmm::harness::fixtures::a9a_like(SEED);
    let (train, _) = vadmm::dataset::relabel(&pair.train).unwrap();
    let (test, _) = vadmm::dataset::relabel(&pair.test).unwrap();
    let n = train.n_samples() as f64;
    let opts = BaselineOptions {
        lambda: 1e-4,
        loss_scale: 1.0 / n,
        max_steps: 20_000,
        init_step: 1.0,
        grad_tol: 1e-6,
    };
    let fit = baseline_centralized(&train, &test, &opts).unwrap();
    assert!(fit.grad_norm <= 1e-6, "gradient norm at exit: {}", fit.grad_norm);
    assert!(fit.steps < 20_000, "converged before the step cap");
}

// ----- CLI contract -----

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vadmm"))
}

#[test]
fn cli_budget_prints_composition() {
    let out = bin()
        .args(["budget", "--epsilon", "0.1", "--delta", "1e-6", "--epochs", "100", "--delta-prime", "1e-4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("epsilon_total"));
    let eps: f64 = text
        .lines()
        .find(|l| l.starts_with("epsilon_total"))
        .and_then(|l| l.split('=').nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((eps - 5.3436).abs() < 1e-3);
}

#[test]
fn cli_run_executes_local_sim_and_materializes_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "train_path": dir.path().join("a9a-200.train.libsvm"),
        "test_path": dir.path().join("a9a-200.test.libsvm"),
        "partition": [66, 57],
        "hyper": { "rho": 1.0, "lambda": 0.02, "max_epochs": 5, "seed": 1 },
        "output_csv": dir.path().join("cli.csv"),
    });
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, config.to_string()).unwrap();

    let out = bin().args(["run", "--config", cfg_path.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("a9a-200.train.libsvm").exists(), "fixture materialized on demand");
    let rows = read_metrics_csv(&dir.path().join("cli.csv")).unwrap();
    assert_eq!(rows.len(), 5);
}

#[test]
fn cli_rejects_bad_config_with_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.json");
    std::fs::write(&cfg_path, r#"{ "train_path": "x", "unknown_field": 3 }"#).unwrap();
    let out = bin().args(["run", "--config", cfg_path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("config"), "stderr: {err}");
}

#[test]
fn cli_usage_errors_exit_one_and_help_exits_zero() {
    let out = bin().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn cli_coordinator_without_parties_times_out_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "train_path": dir.path().join("a9a-200.train.libsvm"),
        "test_path": dir.path().join("a9a-200.test.libsvm"),
        "partition": [66, 57],
        "hyper": { "rho": 1.0, "lambda": 0.02, "max_epochs": 3, "seed": 1 },
        "output_csv": dir.path().join("coord.csv"),
        "role": "coordinator",
        "listen": "127.0.0.1:0",
        "io_timeout_secs": 1,
    });
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, config.to_string()).unwrap();
    let out = bin().args(["run", "--config", cfg_path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cli_two_party_run_over_tcp_matches_local_sim() {
    let dir = tempfile::tempdir().unwrap();
    // Pick a free port up front.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);

    let mk_config = |role: &str, party: Option<u16>, out: &str| {
        let mut v = serde_json::json!({
            "train_path": dir.path().join("a9a-200.train.libsvm"),
            "test_path": dir.path().join("a9a-200.test.libsvm"),
            "partition": [66, 57],
            "hyper": { "rho": 1.0, "lambda": 0.02, "max_epochs": 4, "seed": 1 },
            "output_csv": dir.path().join(out),
            "role": role,
            "io_timeout_secs": 20,
        });
        match role {
            "coordinator" => {
                v["listen"] = serde_json::json!(addr.to_string());
            }
            "party" => {
                v["party_id"] = serde_json::json!(party.unwrap());
                v["connect"] = serde_json::json!(addr.to_string());
            }
            _ => {}
        }
        let path = dir.path().join(format!("{role}{}.json", party.unwrap_or(0)));
        std::fs::write(&path, v.to_string()).unwrap();
        path
    };

    // Local reference.
    let local_cfg = mk_config("local-sim", None, "local.csv");
    assert!(bin().args(["run", "--config", local_cfg.to_str().unwrap()]).output().unwrap().status.success());

    let coord_cfg = mk_config("coordinator", None, "coord.csv");
    let p1_cfg = mk_config("party", Some(1), "p1.csv");
    let p2_cfg = mk_config("party", Some(2), "p2.csv");
    let mut coord = bin().args(["run", "--config", coord_cfg.to_str().unwrap()]).spawn().unwrap();
    let mut p1 = bin().args(["run", "--config", p1_cfg.to_str().unwrap()]).spawn().unwrap();
    let mut p2 = bin().args(["run", "--config", p2_cfg.to_str().unwrap()]).spawn().unwrap();
    assert!(coord.wait().unwrap().success());
    assert!(p1.wait().unwrap().success());
    assert!(p2.wait().unwrap().success());

    let local = read_metrics_csv(&dir.path().join("local.csv")).unwrap();
    let coord_rows = read_metrics_csv(&dir.path().join("coord.csv")).unwrap();
    assert_eq!(local.len(), coord_rows.len());
    for (a, b) in local.iter().zip(&coord_rows) {
        assert_eq!(a.train_objective.to_bits(), b.train_objective.to_bits());
        assert_eq!(a.test_log_loss.to_bits(), b.test_log_loss.to_bits());
        assert_eq!(a.lyapunov.to_bits(), b.lyapunov.to_bits());
    }
    // The party processes wrote their model blocks.
    assert!(dir.path().join("p1.model.json").exists());
    assert!(dir.path().join("p2.model.json").exists());
}
