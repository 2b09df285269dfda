// Temporary tuning probe; deleted before shipping.

use std::time::Instant;

use vadmm::engine::{self, HyperParams};
use vadmm::harness::baseline::{baseline_centralized, baseline_local, BaselineOptions};
use vadmm::harness::fixtures::{a9a_200, a9a_like, gisette_small};
use vadmm::harness::run::{execute_local, prepare_from_data};
use vadmm::harness::config::{ExperimentConfig, HyperConfig, LossScaleConfig};
use vadmm::dataset::{vertical_split, PartitionSpec};
use vadmm::objective::{LogisticLoss, LossProfile, SeparableLoss};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "a9a200".to_string());
    match which.as_str() {
        "a9a200" => probe_a9a_200(),
        "a9afull" => probe_a9a_full(),
        "gisette" => probe_gisette_small(),
        "gisettefull" => probe_gisette_full(),
        "gtraj" => probe_gisette_traj(),
        "sweep" => probe_sweep(),
        "rectraj" => probe_rec_traj(),
        other => eprintln!("unknown probe {other}"),
    }
}

fn probe_a9a_200() {
    let t0 = Instant::now();
    let pair = a9a_200(1);
    println!("generated in {:?}", t0.elapsed());
    let spec = PartitionSpec::new(vec![66, 57]).unwrap();
    let (train, _) = vadmm::dataset::relabel(&pair.train).unwrap();
    let shards = vertical_split(&train, &spec).unwrap();
    for s in &shards {
        let (lo, hi) = s.gram_extremes().unwrap();
        println!("party {}: sigma_min {lo:.4e} sigma_max {hi:.4e}", s.party_id());
    }
    let loss = LogisticLoss::new(train.labels().clone(), 1.0);
    let profile = LossProfile { lipschitz: loss.lipschitz(), convex: true };
    let lambda = 1e-4 * 200.0;
    match engine::recommend_rho(&shards, &profile, lambda) {
        Ok(rho) => {
            println!("recommended rho = {rho:.4e} (lambda = {lambda})");
            let h = HyperParams { rho, lambda, max_epochs: 60000, lyapunov_tol: Some(1e-7), seed: 1 };
            let t1 = Instant::now();
            let trace = engine::run(&shards, &loss, &h, None, None, |_, _| {}).unwrap();
            let last = trace.records.last().unwrap();
            println!(
                "epochs {} in {:?}: V {:.3e} primal {:.3e} objective {:.4} lagrangian {:.4}",
                last.t,
                t1.elapsed(),
                last.lyapunov,
                last.primal_residual,
                last.objective,
                last.lagrangian
            );
            // descent check over first 100 epochs
            let mut prev = f64::INFINITY;
            let mut ok = true;
            for r in trace.records.iter().take(100) {
                if r.lagrangian > prev + 1e-8 {
                    ok = false;
                    println!("ASCENT at t={} ({} > {})", r.t, r.lagrangian, prev);
                }
                prev = r.lagrangian;
            }
            println!("descent over first 100 epochs: {ok}");
            // V milestones
            for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
                let t_eps = trace.records.iter().position(|r| r.lyapunov <= eps).map(|i| i + 1);
                println!("T({eps:.0e}) = {t_eps:?} product {:?}", t_eps.map(|t| t as f64 * eps));
            }
        }
        Err(e) => println!("recommend_rho failed: {e}"),
    }

    for rho in [0.5, 2.0, 10.0, 50.0] {
        let h = HyperParams { rho, lambda, max_epochs: 20000, lyapunov_tol: Some(1e-7), seed: 1 };
        let t1 = Instant::now();
        let trace = engine::run(&shards, &loss, &h, None, None, |_, _| {}).unwrap();
        let last = trace.records.last().unwrap();
        println!(
            "rho {rho}: epochs {} in {:?}: V {:.3e} primal {:.3e} objective {:.4}",
            last.t,
            t1.elapsed(),
            last.lyapunov,
            last.primal_residual,
            last.objective,
        );
    }
}

fn probe_a9a_full() {
    let t0 = Instant::now();
    let pair = a9a_like(1);
    println!("generated full pair in {:?}", t0.elapsed());
    let (train, _) = vadmm::dataset::relabel(&pair.train).unwrap();
    let (test, _) = vadmm::dataset::relabel(&pair.test).unwrap();
    let n = train.n_samples() as f64;
    let lambda: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(1e-3 * n);
    println!("lambda = {lambda}");

    let t1 = Instant::now();
    let opts = BaselineOptions { lambda, loss_scale: 1.0, max_steps: 20000, init_step: 1.0, grad_tol: 1e-6 };
    let central = baseline_centralized(&train, &test, &opts).unwrap();
    println!(
        "centralized: steps {} grad {:.2e} obj {:.4} test ll {:.5} acc {:.4} in {:?}",
        central.steps, central.grad_norm, central.train_objective, central.test_log_loss, central.test_accuracy,
        t1.elapsed()
    );
    let t2 = Instant::now();
    let local = baseline_local(&train, &test, &opts, 66).unwrap();
    println!(
        "local: steps {} grad {:.2e} obj {:.4} test ll {:.5} acc {:.4} in {:?}",
        local.steps, local.grad_norm, local.train_objective, local.test_log_loss, local.test_accuracy,
        t2.elapsed()
    );

    for rho in [0.5, 1.0, 2.0, 5.0, 10.0, 50.0] {
        let cfg = ExperimentConfig {
            train_path: "unused".into(),
            test_path: "unused".into(),
            partition: vec![66, 57],
            hyper: HyperConfig { rho: Some(rho), lambda: Some(lambda), max_epochs: 50, lyapunov_tol: None, seed: 1 },
            privacy: None,
            role: Default::default(),
            party_id: None,
            listen: None,
            connect: None,
            output_csv: "unused.csv".into(),
            force_dim: None,
            row_normalize: None,
            loss_scale: LossScaleConfig::One,
            io_timeout_secs: 30,
        };
        let t3 = Instant::now();
        let prep = prepare_from_data(&cfg, pair.train.clone(), pair.test.clone()).unwrap();
        let (metrics, trace) = execute_local(&prep).unwrap();
        let last = metrics.last().unwrap();
        println!(
            "rho {rho}: T50 test ll {:.5} (gap to central {:+.5}) obj {:.4} primal {:.3e} V {:.3e} in {:?} pass={}",
            last.test_log_loss,
            last.test_log_loss - central.test_log_loss,
            last.train_objective,
            last.primal_residual,
            last.lyapunov,
            t3.elapsed(),
            trace.assumption.pass,
        );
    }
}

fn probe_gisette_small() {
    let pair = gisette_small(1);
    let (train, _) = vadmm::dataset::relabel(&pair.train).unwrap();
    let (test, _) = vadmm::dataset::relabel(&pair.test).unwrap();
    let n = train.n_samples() as f64;
    let lambda = 1e-4 * n;
    let opts = BaselineOptions { lambda: lambda / n, loss_scale: 1.0 / n, max_steps: 5000, init_step: 1.0, grad_tol: 1e-6 };
    let t1 = Instant::now();
    let central = baseline_centralized(&train, &test, &opts).unwrap();
    println!(
        "centralized: steps {} grad {:.2e} test ll {:.5} acc {:.4} in {:?}",
        central.steps, central.grad_norm, central.test_log_loss, central.test_accuracy, t1.elapsed()
    );
    let local = baseline_local(&train, &test, &opts, 200).unwrap();
    println!("local-200: test ll {:.5} acc {:.4}", local.test_log_loss, local.test_accuracy);

    for rho in [0.1, 0.2, 0.3, 0.5] {
        let cfg = ExperimentConfig {
            train_path: "unused".into(),
            test_path: "unused".into(),
            partition: vec![200, 200, 100],
            hyper: HyperConfig { rho: Some(rho), lambda: Some(lambda), max_epochs: 30, lyapunov_tol: None, seed: 1 },
            privacy: None,
            role: Default::default(),
            party_id: None,
            listen: None,
            connect: None,
            output_csv: "unused.csv".into(),
            force_dim: None,
            row_normalize: None,
            loss_scale: LossScaleConfig::One,
            io_timeout_secs: 30,
        };
        let t3 = Instant::now();
        let prep = prepare_from_data(&cfg, pair.train.clone(), pair.test.clone()).unwrap();
        let (metrics, _) = execute_local(&prep).unwrap();
        let last = metrics.last().unwrap();
        println!(
            "rho {rho}: T30 test ll {:.5} (local gap {:+.5}) obj {:.4} primal {:.3e} in {:?}",
            last.test_log_loss,
            local.test_log_loss - last.test_log_loss,
            last.train_objective,
            last.primal_residual,
            t3.elapsed()
        );
    }
}


fn probe_gisette_full() {
    use vadmm::harness::fixtures::gisette_like;
    let t0 = Instant::now();
    let pair = gisette_like(1);
    println!("generated full gisette pair in {:?}", t0.elapsed());
    let (train, _) = vadmm::dataset::relabel(&pair.train).unwrap();
    let (test, _) = vadmm::dataset::relabel(&pair.test).unwrap();
    let n = train.n_samples() as f64;
    for lambda in [2.0, 6.0] {
        let opts = BaselineOptions { lambda: lambda / n, loss_scale: 1.0 / n, max_steps: 3000, init_step: 1.0, grad_tol: 1e-6 };
        let t1 = Instant::now();
        let central = baseline_centralized(&train, &test, &opts).unwrap();
        println!(
            "lambda {lambda}: centralized steps {} grad {:.2e} test ll {:.5} acc {:.4} in {:?}",
            central.steps, central.grad_norm, central.test_log_loss, central.test_accuracy, t1.elapsed()
        );
        for rho in [0.05, 0.1, 0.2, 0.4] {
            let cfg = ExperimentConfig {
                train_path: "unused".into(),
                test_path: "unused".into(),
                partition: vec![2000, 2000, 1000],
                hyper: HyperConfig { rho: Some(rho), lambda: Some(lambda), max_epochs: 30, lyapunov_tol: None, seed: 1 },
                privacy: None,
                role: Default::default(),
                party_id: None,
                listen: None,
                connect: None,
                output_csv: "unused.csv".into(),
                force_dim: None,
                row_normalize: None,
                loss_scale: LossScaleConfig::One,
                io_timeout_secs: 30,
            };
            let t3 = Instant::now();
            let prep = prepare_from_data(&cfg, pair.train.clone(), pair.test.clone()).unwrap();
            let (metrics, _) = execute_local(&prep).unwrap();
            let last = metrics.last().unwrap();
            println!(
                "  rho {rho}: T30 test ll {:.5} acc?? obj {:.2} primal {:.3e} in {:?}",
                last.test_log_loss, last.train_objective, last.primal_residual, t3.elapsed()
            );
        }
    }
}


fn probe_gisette_traj() {
    use vadmm::harness::fixtures::gisette_like;
    let pair = gisette_like(1);
    let lambda: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(6.0);
    let rho: f64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let cfg = ExperimentConfig {
        train_path: "unused".into(),
        test_path: "unused".into(),
        partition: vec![2000, 2000, 1000],
        hyper: HyperConfig { rho: Some(rho), lambda: Some(lambda), max_epochs: 30, lyapunov_tol: None, seed: 1 },
        privacy: None,
        role: Default::default(),
        party_id: None,
        listen: None,
        connect: None,
        output_csv: "unused.csv".into(),
        force_dim: None,
        row_normalize: None,
        loss_scale: LossScaleConfig::One,
        io_timeout_secs: 30,
    };
    let prep = prepare_from_data(&cfg, pair.train.clone(), pair.test.clone()).unwrap();
    let (metrics, _) = execute_local(&prep).unwrap();
    for m in &metrics {
        if m.epoch % 3 == 0 || m.epoch <= 5 {
            println!("epoch {:2}: test ll {:.5} obj {:.2} primal {:.3e}", m.epoch, m.test_log_loss, m.train_objective, m.primal_residual);
        }
    }
}


fn probe_sweep() {
    use vadmm::harness::fixtures::a9a_200;
    use vadmm::harness::sweep::{mean_by_multiplier, noise_sweep};
    use vadmm::harness::config::PrivacyConfig;
    let pair = a9a_200(1);
    let rho: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(8.0);
    let eps: f64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let delta: f64 = std::env::args().nth(4).map(|s| s.parse().unwrap()).unwrap_or(1e-2);
    let b1: f64 = std::env::args().nth(5).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let t: usize = std::env::args().nth(6).map(|s| s.parse().unwrap()).unwrap_or(30);
    let cfg = ExperimentConfig {
        train_path: "unused".into(),
        test_path: "unused".into(),
        partition: vec![66, 57],
        hyper: HyperConfig { rho: Some(rho), lambda: Some(0.02), max_epochs: t, lyapunov_tol: None, seed: 1 },
        privacy: Some(PrivacyConfig { epsilon: eps, delta, delta_prime: 1e-2, b1, c1: 1.0, sigma_multiplier: 1.0, seed: None }),
        role: Default::default(),
        party_id: None,
        listen: None,
        connect: None,
        output_csv: "unused.csv".into(),
        force_dim: None,
        row_normalize: None,
        loss_scale: LossScaleConfig::One,
        io_timeout_secs: 30,
    };
    let t0 = Instant::now();
    let rows = noise_sweep(&cfg, &pair.train, &pair.test, &[0.0, 0.5, 1.0, 2.0, 4.0], 5).unwrap();
    for (m, mean) in mean_by_multiplier(&rows, &[0.0, 0.5, 1.0, 2.0, 4.0]) {
        println!("multiplier {m}: mean {mean:.5}");
    }
    println!("({:?})", t0.elapsed());
    // per-seed detail
    for r in &rows { println!("  mult {} seed {} ll {:.5}", r.multiplier, r.seed, r.final_test_log_loss); }
}


fn probe_rec_traj() {
    use vadmm::harness::fixtures::a9a_200;
    let pair = a9a_200(1);
    let (train, _) = vadmm::dataset::relabel(&pair.train).unwrap();
    let spec = PartitionSpec::new(vec![66, 57]).unwrap();
    let shards = vertical_split(&train, &spec).unwrap();
    let loss = LogisticLoss::new(train.labels().clone(), 1.0);
    let profile = LossProfile { lipschitz: loss.lipschitz(), convex: true };
    let rho = engine::recommend_rho(&shards, &profile, 0.02).unwrap();
    println!("rho = {rho:.4e}");
    let h = HyperParams { rho, lambda: 0.02, max_epochs: 500_000, lyapunov_tol: Some(1e-4), seed: 1 };
    let trace = engine::run(&shards, &loss, &h, None, None, |_, _| {}).unwrap();
    let last = trace.records.last().unwrap();
    println!("recommended run: exited at t {} with V {:.4e} primal {:.3e}", last.t, last.lyapunov, last.primal_residual);
    // practical-rho deep run
    let h = HyperParams { rho: 0.5, lambda: 0.02, max_epochs: 40000, lyapunov_tol: Some(1e-9), seed: 1 };
    let t0 = Instant::now();
    let trace = engine::run(&shards, &loss, &h, None, None, |_, _| {}).unwrap();
    let last = trace.records.last().unwrap();
    println!("practical deep: epochs {} V {:.3e} primal {:.3e} in {:?}", last.t, last.lyapunov, last.primal_residual, t0.elapsed());
}
