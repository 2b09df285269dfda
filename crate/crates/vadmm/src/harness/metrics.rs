//! Per-epoch metrics rows and the fixed CSV schema they are emitted in.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::harness::HarnessError;

pub const CSV_HEADER: &str =
    "epoch,train_objective,test_log_loss,test_accuracy,primal_residual,lyapunov,epsilon_spent,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_objective: f64,
    pub test_log_loss: f64,
    pub test_accuracy: f64,
    pub primal_residual: f64,
    pub lyapunov: f64,
    /// Total budget consumed through this epoch (0 for non-private runs).
    pub epsilon_spent: f64,
    /// Milliseconds elapsed since the run started.
    pub wall_ms: u64,
}

impl MetricsRecord {
    fn to_csv_line(self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_objective,
            self.test_log_loss,
            self.test_accuracy,
            self.primal_residual,
            self.lyapunov,
            self.epsilon_spent,
            self.wall_ms
        )
    }
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<(), HarnessError> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{CSV_HEADER}")?;
    for r in records {
        writeln!(file, "{}", r.to_csv_line())?;
    }
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>, HarnessError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Config("metrics csv is empty".into()))??;
    if header != CSV_HEADER {
        return Err(HarnessError::Config(format!("unexpected metrics header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(HarnessError::Config(format!("metrics row {} has {} fields", i + 2, fields.len())));
        }
        let f = |k: usize| -> Result<f64, HarnessError> {
            fields[k]
                .parse()
                .map_err(|_| HarnessError::Config(format!("metrics row {}: bad number {:?}", i + 2, fields[k])))
        };
        out.push(MetricsRecord {
            epoch: fields[0]
                .parse()
                .map_err(|_| HarnessError::Config(format!("metrics row {}: bad epoch", i + 2)))?,
            train_objective: f(1)?,
            test_log_loss: f(2)?,
            test_accuracy: f(3)?,
            primal_residual: f(4)?,
            lyapunov: f(5)?,
            epsilon_spent: f(6)?,
            wall_ms: fields[7]
                .parse()
                .map_err(|_| HarnessError::Config(format!("metrics row {}: bad wall_ms", i + 2)))?,
        });
    }
    Ok(out)
}
