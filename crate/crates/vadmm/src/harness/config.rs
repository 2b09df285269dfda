//! Experiment configuration: a single JSON document, strictly validated,
//! with CLI flags layered on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::HarnessError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    /// Column counts per party, in order.
    pub partition: Vec<usize>,
    pub hyper: HyperConfig,
    #[serde(default)]
    pub privacy: Option<PrivacyConfig>,
    #[serde(default)]
    pub role: Role,
    /// Wire party id (1-based); required when role = party.
    #[serde(default)]
    pub party_id: Option<u16>,
    #[serde(default)]
    pub listen: Option<String>,
    #[serde(default)]
    pub connect: Option<String>,
    pub output_csv: PathBuf,
    /// Pin the feature count when train/test files omit trailing columns.
    #[serde(default)]
    pub force_dim: Option<usize>,
    /// Defaults to per-party when privacy is enabled, otherwise off.
    #[serde(default)]
    pub row_normalize: Option<RowNormalize>,
    #[serde(default)]
    pub loss_scale: LossScaleConfig,
    #[serde(default = "default_io_timeout")]
    pub io_timeout_secs: u64,
}

fn default_io_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    #[default]
    LocalSim,
    Coordinator,
    Party,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowNormalize {
    Off,
    PerParty,
    FullRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossScaleConfig {
    #[default]
    One,
    InverseN,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    /// Penalty; omitted means "search for the smallest feasible one".
    #[serde(default)]
    pub rho: Option<f64>,
    /// Regularization weight; omitted means 1e-4 * N * loss_scale.
    #[serde(default)]
    pub lambda: Option<f64>,
    pub max_epochs: usize,
    #[serde(default)]
    pub lyapunov_tol: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub b1: f64,
    #[serde(default = "one")]
    pub c1: f64,
    /// Experiment knob scaling the calibrated noise level; budget accounting
    /// always reports the configured (epsilon, delta).
    #[serde(default = "one")]
    pub sigma_multiplier: f64,
    /// Noise seed; defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| HarnessError::Config(format!("at {}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.partition.is_empty() || self.partition.iter().any(|&w| w == 0) {
            return Err(HarnessError::Config("partition: widths must be nonempty and positive".into()));
        }
        if self.hyper.max_epochs == 0 && self.role != Role::LocalSim {
            return Err(HarnessError::Config("hyper.max_epochs: distributed roles need at least one epoch".into()));
        }
        if let Some(rho) = self.hyper.rho {
            if rho <= 0.0 {
                return Err(HarnessError::Config("hyper.rho: must be positive".into()));
            }
        }
        if let Some(lambda) = self.hyper.lambda {
            if lambda < 0.0 {
                return Err(HarnessError::Config("hyper.lambda: must be nonnegative".into()));
            }
        }
        match self.role {
            Role::Party => {
                let id = self
                    .party_id
                    .ok_or_else(|| HarnessError::Config("party_id: required when role = party".into()))?;
                if id == 0 || id as usize > self.partition.len() {
                    return Err(HarnessError::Config(format!(
                        "party_id: must lie in 1..={}, got {id}",
                        self.partition.len()
                    )));
                }
                if self.connect.is_none() {
                    return Err(HarnessError::Config("connect: required when role = party".into()));
                }
            }
            Role::Coordinator => {
                if self.listen.is_none() {
                    return Err(HarnessError::Config("listen: required when role = coordinator".into()));
                }
            }
            Role::LocalSim => {}
        }
        if let Some(p) = &self.privacy {
            let params = p.to_params(self.hyper.seed);
            params.validate().map_err(|e| HarnessError::Config(format!("privacy: {e}")))?;
            if p.sigma_multiplier < 0.0 {
                return Err(HarnessError::Config("privacy.sigma_multiplier: must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

impl PrivacyConfig {
    pub fn to_params(&self, default_seed: u64) -> crate::privacy::PrivacyParams {
        crate::privacy::PrivacyParams {
            epsilon: self.epsilon,
            delta: self.delta,
            delta_prime: self.delta_prime,
            b1: self.b1,
            c1: self.c1,
            seed: self.seed.unwrap_or(default_seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "train_path": "train.libsvm",
            "test_path": "test.libsvm",
            "partition": [2, 3],
            "hyper": { "max_epochs": 5 },
            "output_csv": "out.csv"
        })
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json_str(&minimal_json().to_string()).unwrap();
        assert_eq!(cfg.role, Role::LocalSim);
        assert_eq!(cfg.loss_scale, LossScaleConfig::One);
        assert_eq!(cfg.io_timeout_secs, 30);
        assert!(cfg.privacy.is_none());
    }

    #[test]
    fn unknown_fields_are_reported_with_paths() {
        let mut v = minimal_json();
        v["hyper"]["rho_typo"] = serde_json::json!(1.0);
        let err = ExperimentConfig::from_json_str(&v.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("hyper"), "message should carry the field path: {msg}");
    }

    #[test]
    fn party_role_requires_id_and_connect() {
        let mut v = minimal_json();
        v["role"] = serde_json::json!("party");
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());
        v["party_id"] = serde_json::json!(1);
        v["connect"] = serde_json::json!("127.0.0.1:9000");
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_ok());
        v["party_id"] = serde_json::json!(7);
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn privacy_block_is_validated() {
        let mut v = minimal_json();
        v["privacy"] = serde_json::json!({
            "epsilon": 2.0, "delta": 1e-5, "delta_prime": 1e-4, "b1": 1.0
        });
        let err = ExperimentConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("epsilon"));
        v["privacy"]["epsilon"] = serde_json::json!(0.5);
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_ok());
    }
}
