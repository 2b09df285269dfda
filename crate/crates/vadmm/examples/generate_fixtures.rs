//! Materialize the synthetic benchmark fixtures as LIBSVM text files.
//!
//! ```bash
//! cargo run --release --example generate_fixtures            # CI-size pairs
//! cargo run --release --example generate_fixtures -- --full  # + full-size pairs
//! ```
//!
//! Files land in ./data/ and are drop-in replacements for real LIBSVM
//! datasets in experiment configs.

use std::path::Path;

use vadmm::harness::fixtures::{a9a_200, a9a_like, gisette_like, gisette_small, write_libsvm_file, FIXTURE_SEED};

fn main() {
    let full = std::env::args().any(|a| a == "--full");
    let data = Path::new("data");

    let pair = a9a_200(FIXTURE_SEED);
    write_libsvm_file(&pair.train, &data.join("a9a-200.train.libsvm")).unwrap();
    write_libsvm_file(&pair.test, &data.join("a9a-200.test.libsvm")).unwrap();
    println!(
        "a9a-200: {} train / {} test rows, {} features",
        pair.train.n_samples(),
        pair.test.n_samples(),
        pair.train.n_features()
    );

    let pair = gisette_small(FIXTURE_SEED);
    write_libsvm_file(&pair.train, &data.join("gisette-small.train.libsvm")).unwrap();
    write_libsvm_file(&pair.test, &data.join("gisette-small.test.libsvm")).unwrap();
    println!(
        "gisette-small: {} train / {} test rows, {} features",
        pair.train.n_samples(),
        pair.test.n_samples(),
        pair.train.n_features()
    );

    if full {
        let pair = a9a_like(FIXTURE_SEED);
        write_libsvm_file(&pair.train, &data.join("a9a.train.libsvm")).unwrap();
        write_libsvm_file(&pair.test, &data.join("a9a.test.libsvm")).unwrap();
        println!("a9a: {} train / {} test rows", pair.train.n_samples(), pair.test.n_samples());

        let pair = gisette_like(FIXTURE_SEED);
        write_libsvm_file(&pair.train, &data.join("gisette.train.libsvm")).unwrap();
        write_libsvm_file(&pair.test, &data.join("gisette.test.libsvm")).unwrap();
        println!("gisette: {} train / {} test rows (large file)", pair.train.n_samples(), pair.test.n_samples());
    } else {
        println!("(run with --full to also write the full-size a9a and gisette pairs)");
    }
}
