//! JSON run manifest: the config echoed back plus content hashes of the
//! input files, so an emitted CSV can always be traced to exact inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::harness::config::ExperimentConfig;
use crate::harness::HarnessError;

pub fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = std::fs::read(path)?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn manifest_path(config: &ExperimentConfig) -> PathBuf {
    let mut p = config.output_csv.clone();
    p.set_extension("manifest.json");
    p
}

pub fn write_manifest(config: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    let mut inputs = BTreeMap::new();
    for path in [&config.train_path, &config.test_path] {
        if path.exists() {
            inputs.insert(path.display().to_string(), sha256_file(path)?);
        }
    }
    let manifest = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "inputs": inputs,
    });
    let path = manifest_path(config);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_reference_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
