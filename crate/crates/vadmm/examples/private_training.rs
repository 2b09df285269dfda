//! Differentially private training: bound each party's share sensitivity,
//! calibrate the Gaussian noise for a per-iteration (epsilon, delta), enable
//! the iterate-norm ball the bound presumes, and track the accumulated
//! budget per epoch.
//!
//! ```bash
//! cargo run --release --example private_training
//! ```

use vadmm::harness::config::{ExperimentConfig, HyperConfig, LossScaleConfig, PrivacyConfig};
use vadmm::harness::fixtures::a9a_200;
use vadmm::harness::run::{execute_local, prepare_from_data};
use vadmm::privacy::total_budget;

fn main() {
    let pair = a9a_200(1);
    let privacy = PrivacyConfig {
        epsilon: 1.0,
        delta: 1e-2,
        delta_prime: 1e-2,
        b1: 2.0,
        c1: 1.0,
        sigma_multiplier: 1.0,
        seed: None,
    };
    let config = ExperimentConfig {
        train_path: "in-memory".into(),
        test_path: "in-memory".into(),
        partition: vec![66, 57],
        hyper: HyperConfig { rho: Some(4.0), lambda: Some(0.02), max_epochs: 30, lyapunov_tol: None, seed: 7 },
        privacy: Some(privacy),
        role: Default::default(),
        party_id: None,
        listen: None,
        connect: None,
        output_csv: "target/examples-out/private_training.csv".into(),
        force_dim: None,
        row_normalize: None, // defaults to per-party row normalization in private runs
        loss_scale: LossScaleConfig::One,
        io_timeout_secs: 30,
    };

    let prep = prepare_from_data(&config, pair.train.clone(), pair.test.clone()).unwrap();
    let dp = prep.privacy.as_ref().unwrap();
    println!("per-party calibration at rho = {}, b1 = {}:", prep.hyper.rho, dp.ball);
    for (shard, sigma) in prep.shards.iter().zip(&dp.sigmas) {
        println!("  party {} ({} columns): sigma = {sigma:.4}", shard.party_id(), shard.width());
    }
    let (eps_total, delta_total) =
        total_budget(dp.params.epsilon, dp.params.delta, config.hyper.max_epochs, dp.params.delta_prime);
    println!(
        "budget after {} epochs: ({eps_total:.3}, {delta_total:.4})-differential privacy per party\n",
        config.hyper.max_epochs
    );

    let (metrics, _) = execute_local(&prep).unwrap();
    println!("{:>5} {:>13} {:>13} {:>12}", "epoch", "test log loss", "accuracy", "eps spent");
    for m in metrics.iter().filter(|m| m.epoch % 5 == 0 || m.epoch == 1) {
        println!("{:>5} {:>13.5} {:>13.4} {:>12.3}", m.epoch, m.test_log_loss, m.test_accuracy, m.epsilon_spent);
    }

    // Same run without the noise, for scale.
    let mut clean = config.clone();
    clean.privacy.as_mut().unwrap().sigma_multiplier = 0.0;
    let prep = prepare_from_data(&clean, pair.train.clone(), pair.test.clone()).unwrap();
    let (metrics, _) = execute_local(&prep).unwrap();
    println!("\nnoise-free reference (same ball and normalization): final test log loss {:.5}", metrics.last().unwrap().test_log_loss);
}
