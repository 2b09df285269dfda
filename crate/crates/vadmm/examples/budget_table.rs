//! Privacy budget composition over training epochs: per-iteration
//! (epsilon, delta) accumulate into sqrt(2 T ln(1/delta')) eps +
//! T eps (e^eps - 1), with delta' slack added to T delta.
//!
//! ```bash
//! cargo run --example budget_table
//! ```

use vadmm::privacy::total_budget;

fn main() {
    let delta = 1e-6;
    let delta_prime = 1e-4;
    let epsilons = [0.05, 0.1, 0.2, 0.5, 1.0];
    let epochs = [1usize, 5, 10, 30, 50, 100, 300];

    print!("{:>8}", "T \\ eps");
    for eps in epsilons {
        print!("{eps:>10}");
    }
    println!();
    for t in epochs {
        print!("{t:>8}");
        for eps in epsilons {
            let (total, _) = total_budget(eps, delta, t, delta_prime);
            print!("{total:>10.3}");
        }
        println!();
    }
    println!("\n(total epsilon per party; delta_total = T * {delta} + {delta_prime})");
    println!("budget grows superlinearly in the per-iteration epsilon, so fast convergence buys privacy.");
}
