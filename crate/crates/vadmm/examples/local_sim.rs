//! Deterministic in-process simulation: two parties share a 123-feature
//! binary task, the engine runs the parallel sharing iteration and prints
//! the per-epoch diagnostics the convergence analysis defines.
//!
//! ```bash
//! cargo run --release --example local_sim
//! ```

use vadmm::dataset::{relabel, vertical_split, PartitionSpec};
use vadmm::engine::{self, HyperParams};
use vadmm::harness::baseline::evaluate_scores;
use vadmm::harness::fixtures::a9a_200;
use vadmm::objective::LogisticLoss;

fn main() {
    let pair = a9a_200(1);
    let (train, map) = relabel(&pair.train).unwrap();
    let (test, _) = relabel(&pair.test).unwrap();
    println!(
        "loaded {} train / {} test samples, {} features; labels {:+} -> -1, {:+} -> +1",
        train.n_samples(),
        test.n_samples(),
        train.n_features(),
        map.negative,
        map.positive
    );

    let spec = PartitionSpec::new(vec![66, 57]).unwrap();
    let shards = vertical_split(&train, &spec).unwrap();
    let test_blocks = vadmm::dataset::split_matrix(test.features(), &spec).unwrap();
    let loss = LogisticLoss::new(train.labels().clone(), 1.0);

    let hyper = HyperParams { rho: 0.5, lambda: 0.02, max_epochs: 40, lyapunov_tol: None, seed: 1 };
    println!("rho = {}, lambda = {}, {} epochs\n", hyper.rho, hyper.lambda, hyper.max_epochs);
    println!("{:>5} {:>14} {:>13} {:>13} {:>12}", "epoch", "objective", "test log loss", "primal resid", "lyapunov");

    let trace = engine::run(&shards, &loss, &hyper, None, None, |state, record| {
        if record.t % 5 == 0 || record.t <= 3 {
            let mut scores = nalgebra::DVector::zeros(test.n_samples());
            for (block, x) in test_blocks.iter().zip(&state.x) {
                scores += block * x;
            }
            let (ll, _) = evaluate_scores(&scores, test.labels()).unwrap();
            println!(
                "{:>5} {:>14.6} {:>13.6} {:>13.3e} {:>12.3e}",
                record.t, record.objective, ll, record.primal_residual, record.lyapunov
            );
        }
    })
    .unwrap();

    println!("\npenalty feasibility at this rho (warnings only):\n{}", trace.assumption);
    let final_x_norms: Vec<String> = trace.final_state.x.iter().map(|x| format!("{:.3}", x.norm())).collect();
    println!("final model block norms: {}", final_x_norms.join(", "));
}
