//! Repeat a private run across noise multipliers and seeds; more noise never
//! helps, mirroring the test-loss-versus-noise picture.
//!
//! ```bash
//! cargo run --release --example noise_sweep
//! ```

use vadmm::harness::config::{ExperimentConfig, HyperConfig, LossScaleConfig, PrivacyConfig};
use vadmm::harness::fixtures::a9a_200;
use vadmm::harness::sweep::{mean_by_multiplier, noise_sweep, write_sweep_csv};

fn main() {
    let pair = a9a_200(1);
    let config = ExperimentConfig {
        train_path: "in-memory".into(),
        test_path: "in-memory".into(),
        partition: vec![66, 57],
        hyper: HyperConfig { rho: Some(4.0), lambda: Some(0.02), max_epochs: 30, lyapunov_tol: None, seed: 1 },
        privacy: Some(PrivacyConfig {
            epsilon: 1.0,
            delta: 1e-2,
            delta_prime: 1e-2,
            b1: 2.0,
            c1: 1.0,
            sigma_multiplier: 1.0,
            seed: None,
        }),
        role: Default::default(),
        party_id: None,
        listen: None,
        connect: None,
        output_csv: "target/examples-out/noise_sweep.csv".into(),
        force_dim: None,
        row_normalize: None,
        loss_scale: LossScaleConfig::One,
        io_timeout_secs: 30,
    };

    let multipliers = [0.0, 0.5, 1.0, 2.0, 4.0];
    let seeds = 5;
    let rows = noise_sweep(&config, &pair.train, &pair.test, &multipliers, seeds).unwrap();

    println!("{:>10} {:>22}", "multiplier", "mean final test loss");
    for (m, mean) in mean_by_multiplier(&rows, &multipliers) {
        let bar: String = std::iter::repeat('#').take((mean * 60.0) as usize).collect();
        println!("{m:>10} {mean:>22.5}  {bar}");
    }

    let out = std::path::Path::new("target/examples-out/noise_sweep.csv");
    write_sweep_csv(out, &rows).unwrap();
    println!("\n{} rows written to {}", rows.len(), out.display());
}
