//! Deterministic synthetic benchmark generators.
//!
//! The sandbox this crate is developed in has no copy of the classic LIBSVM
//! benchmarks, so the harness ships seeded generators that produce stand-ins
//! with the same shapes: an adult-income-style binary task (32561/16281
//! samples, 123 sparse binary features) and a gisette-style near-separable
//! task (6000/1000 samples, 5000 dense-ish features), plus small slices for
//! CI. Labels are drawn from a planted logistic model, so the Bayes-optimal
//! predictor is linear and both the sharing algorithm and the centralized
//! baselines are fitting a recoverable concept. Real LIBSVM files drop in
//! through the same config paths.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{serialize_libsvm, LabeledDataset};
use crate::harness::HarnessError;
use crate::objective::sigmoid;

#[derive(Debug, Clone)]
pub struct SynthPair {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl SynthPair {
    /// First `n_train` training rows and `n_test` test rows.
    pub fn head(&self, n_train: usize, n_test: usize) -> SynthPair {
        SynthPair { train: self.train.head(n_train), test: self.test.head(n_test) }
    }
}

/// Adult-income-shaped task: 32561/16281 samples, 123 binary features with
/// skewed popularities (about 14 active per row), moderately noisy labels.
pub fn a9a_like(seed: u64) -> SynthPair {
    binary_synth(32561, 16281, 123, 14.0, 2.2, -1.1, seed)
}

/// The CI fixture: first 200 training rows (and 2000 test rows) of the full
/// adult-income-shaped task.
pub fn a9a_200(seed: u64) -> SynthPair {
    a9a_like(seed).head(200, 2000)
}

/// Gisette-shaped task: 6000/1000 samples, 5000 dense-ish features, nearly
/// separable labels with the signal carried by a sparse subset of columns
/// (the rest act as probes). Heavy; gate behind an opt-in flag.
pub fn gisette_like(seed: u64) -> SynthPair {
    dense_synth(6000, 1000, 5000, 0.3, 24.0, 16, seed)
}

/// 500-feature gisette-style subset at CI scale.
pub fn gisette_small(seed: u64) -> SynthPair {
    dense_synth(3000, 800, 500, 0.3, 24.0, 8, seed)
}

fn binary_synth(
    n_train: usize,
    n_test: usize,
    d: usize,
    avg_active: f64,
    margin: f64,
    bias: f64,
    seed: u64,
) -> SynthPair {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5641_0A9A);

    // Skewed column popularities normalized to the target row density.
    let mut pops: Vec<f64> = (0..d).map(|_| rng.random::<f64>().powi(2) + 0.02).collect();
    let total: f64 = pops.iter().sum();
    for p in pops.iter_mut() {
        *p = (*p * avg_active / total).clamp(0.015, 0.85);
    }
    let weights = DVector::from_fn(d, |_, _| {
        let g: f64 = StandardNormal.sample(&mut rng);
        g
    });

    let train_features = DMatrix::from_fn(n_train, d, |_, j| if rng.random::<f64>() < pops[j] { 1.0 } else { 0.0 });
    let raw: Vec<f64> = (0..n_train).map(|i| train_features.row(i) * &weights).map(|v| v[0]).collect();
    let mean = raw.iter().sum::<f64>() / n_train as f64;
    let var = raw.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n_train as f64;
    let alpha = margin / var.sqrt().max(1e-9);

    let train_labels = DVector::from_fn(n_train, |i, _| {
        let p = sigmoid(alpha * (raw[i] - mean) + bias);
        if rng.random::<f64>() < p {
            1.0
        } else {
            -1.0
        }
    });

    let test_features = DMatrix::from_fn(n_test, d, |_, j| if rng.random::<f64>() < pops[j] { 1.0 } else { 0.0 });
    let test_labels = DVector::from_fn(n_test, |i, _| {
        let r = (test_features.row(i) * &weights)[0];
        let p = sigmoid(alpha * (r - mean) + bias);
        if rng.random::<f64>() < p {
            1.0
        } else {
            -1.0
        }
    });

    SynthPair {
        train: LabeledDataset::new(train_features, train_labels),
        test: LabeledDataset::new(test_features, test_labels),
    }
}

fn dense_synth(
    n_train: usize,
    n_test: usize,
    d: usize,
    density: f64,
    margin: f64,
    informative_every: usize,
    seed: u64,
) -> SynthPair {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5641_6153);
    // Informative columns are spread evenly (so every party block carries
    // signal) and are redundant noisy readouts of one latent factor, the way
    // a heavily engineered feature set correlates with its class; the rest
    // are pure probes.
    let loadings = DVector::from_fn(d, |j, _| {
        let magnitude = 0.5 + rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        if j % informative_every == 0 {
            sign * magnitude
        } else {
            0.0
        }
    });
    let readout_noise = 0.25;
    let informative_density = 0.85;

    let gen = |n: usize, rng: &mut ChaCha20Rng| {
        let latent = DVector::from_fn(n, |_, _| {
            let g: f64 = StandardNormal.sample(rng);
            g
        });
        let features = DMatrix::from_fn(n, d, |i, j| {
            let col_density = if loadings[j] != 0.0 { informative_density } else { density };
            if rng.random::<f64>() >= col_density {
                return 0.0;
            }
            let noise: f64 = StandardNormal.sample(rng);
            if loadings[j] != 0.0 {
                latent[i] * loadings[j] + readout_noise * noise
            } else {
                noise
            }
        });
        let labels = DVector::from_fn(n, |i, _| {
            if rng.random::<f64>() < sigmoid(margin * latent[i]) {
                1.0
            } else {
                -1.0
            }
        });
        LabeledDataset::new(features, labels)
    };

    let train = gen(n_train, &mut rng);
    let test = gen(n_test, &mut rng);
    SynthPair { train, test }
}

/// Fixture families the CLI can materialize on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    A9a,
    A9a200,
    Gisette,
    GisetteSmall,
}

impl FixtureKind {
    /// Full-size fixtures are heavyweight and sit behind the --full-data flag.
    pub fn is_full_size(self) -> bool {
        matches!(self, FixtureKind::A9a | FixtureKind::Gisette)
    }
}

/// Seed used for every fixture the CLI materializes, so file contents are
/// reproducible across machines.
pub const FIXTURE_SEED: u64 = 1;

/// Recognize `<name>.train.libsvm` / `<name>.test.libsvm` fixture paths.
pub fn fixture_kind(path: &Path) -> Option<(FixtureKind, bool)> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix(".libsvm")?;
    let (base, part) = stem.rsplit_once('.')?;
    let is_train = match part {
        "train" => true,
        "test" => false,
        _ => return None,
    };
    let kind = match base {
        "a9a" => FixtureKind::A9a,
        "a9a-200" => FixtureKind::A9a200,
        "gisette" => FixtureKind::Gisette,
        "gisette-small" => FixtureKind::GisetteSmall,
        _ => return None,
    };
    Some((kind, is_train))
}

/// Generate and write both files of a fixture pair.
pub fn materialize_pair(kind: FixtureKind, train_path: &Path, test_path: &Path) -> Result<(), HarnessError> {
    let pair = match kind {
        FixtureKind::A9a => a9a_like(FIXTURE_SEED),
        FixtureKind::A9a200 => a9a_200(FIXTURE_SEED),
        FixtureKind::Gisette => gisette_like(FIXTURE_SEED),
        FixtureKind::GisetteSmall => gisette_small(FIXTURE_SEED),
    };
    write_libsvm_file(&pair.train, train_path)?;
    write_libsvm_file(&pair.test, test_path)?;
    Ok(())
}

/// If both configured dataset paths name a known fixture pair and either
/// file is missing, generate them. Full-size fixtures require `full_data`.
pub fn ensure_fixtures(train_path: &Path, test_path: &Path, full_data: bool) -> Result<(), HarnessError> {
    let (Some((train_kind, true)), Some((test_kind, false))) = (fixture_kind(train_path), fixture_kind(test_path))
    else {
        return Ok(());
    };
    if train_kind != test_kind {
        return Ok(());
    }
    if train_path.exists() && test_path.exists() {
        return Ok(());
    }
    if train_kind.is_full_size() && !full_data {
        return Err(HarnessError::Config(format!(
            "{} is a full-size fixture; pass --full-data to generate it",
            train_path.display()
        )));
    }
    materialize_pair(train_kind, train_path, test_path)
}

pub fn write_libsvm_file(ds: &LabeledDataset, path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    serialize_libsvm(ds, &mut writer).map_err(crate::harness::HarnessError::Dataset)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::parse_libsvm;
    use std::io::Cursor;

    #[test]
    fn a9a_like_has_the_reference_shape() {
        let pair = a9a_like(1).head(300, 300);
        assert_eq!(pair.train.n_features(), 123);
        assert!(pair.train.labels().iter().all(|&y| y == 1.0 || y == -1.0));
        // Sparse binary rows at roughly the target density.
        let actives: f64 = pair.train.features().iter().filter(|&&v| v == 1.0).count() as f64;
        let per_row = actives / 300.0;
        assert!(per_row > 6.0 && per_row < 25.0, "unexpected row density {per_row}");
    }

    #[test]
    fn generators_are_deterministic() {
        let a = a9a_200(7);
        let b = a9a_200(7);
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = a9a_200(8);
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn full_shape_matches_reference_counts_through_the_parser() {
        // Writing and re-parsing the full fixture checks the advertised
        // sample and feature counts end to end.
        let pair = a9a_like(2);
        assert_eq!((pair.train.n_samples(), pair.train.n_features()), (32561, 123));
        assert_eq!((pair.test.n_samples(), pair.test.n_features()), (16281, 123));

        let mut buf = Vec::new();
        crate::dataset::serialize_libsvm(&pair.train.head(500), &mut buf).unwrap();
        let parsed = parse_libsvm(Cursor::new(buf), Some(123)).unwrap();
        assert_eq!(parsed.n_samples(), 500);
        assert_eq!(parsed.n_features(), 123);
    }

    #[test]
    fn gisette_small_is_dense_and_balanced() {
        let pair = gisette_small(3).head(400, 200);
        assert_eq!(pair.train.n_features(), 500);
        let nonzero = pair.train.features().iter().filter(|&&v| v != 0.0).count() as f64;
        let frac = nonzero / (400.0 * 500.0);
        assert!(frac > 0.2 && frac < 0.4, "density {frac}");
        let pos = pair.train.labels().iter().filter(|&&y| y == 1.0).count() as f64 / 400.0;
        assert!(pos > 0.3 && pos < 0.7, "positive fraction {pos}");
    }
}
