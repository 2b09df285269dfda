//! Noise sweeps: repeat an experiment across noise multipliers and seeds and
//! collect the final test log loss per cell.

use std::io::Write;
use std::path::Path;

use crate::dataset::LabeledDataset;
use crate::harness::config::ExperimentConfig;
use crate::harness::run::{execute_local, prepare_from_data};
use crate::harness::HarnessError;

pub const SWEEP_CSV_HEADER: &str = "multiplier,seed,final_test_log_loss";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub multiplier: f64,
    pub seed: u64,
    pub final_test_log_loss: f64,
}

/// Run the configured experiment once per (multiplier, seed) cell, locally
/// and in memory, scaling the calibrated noise by the multiplier and
/// offsetting the run seed per repetition.
pub fn noise_sweep(
    config: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    multipliers: &[f64],
    n_seeds: usize,
) -> Result<Vec<SweepRow>, HarnessError> {
    if config.privacy.is_none() {
        return Err(HarnessError::Config("noise_sweep needs a privacy block in the config".into()));
    }
    assert!(n_seeds >= 1);
    let mut rows = Vec::with_capacity(multipliers.len() * n_seeds);
    for &multiplier in multipliers {
        for k in 0..n_seeds {
            let mut cell = config.clone();
            cell.privacy.as_mut().expect("checked").sigma_multiplier = multiplier;
            cell.hyper.seed = config.hyper.seed.wrapping_add(k as u64);
            let prep = prepare_from_data(&cell, train.clone(), test.clone())?;
            let (metrics, _) = execute_local(&prep)?;
            let last = metrics
                .last()
                .ok_or_else(|| HarnessError::Config("sweep run produced no epochs".into()))?;
            rows.push(SweepRow {
                multiplier,
                seed: cell.hyper.seed,
                final_test_log_loss: last.test_log_loss,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(file, "{},{},{}", r.multiplier, r.seed, r.final_test_log_loss)?;
    }
    Ok(())
}

/// Mean final loss per multiplier, in the order given.
pub fn mean_by_multiplier(rows: &[SweepRow], multipliers: &[f64]) -> Vec<(f64, f64)> {
    multipliers
        .iter()
        .map(|&m| {
            let cells: Vec<f64> =
                rows.iter().filter(|r| r.multiplier == m).map(|r| r.final_test_log_loss).collect();
            (m, cells.iter().sum::<f64>() / cells.len().max(1) as f64)
        })
        .collect()
}
