//! Run manifests: enough to re-run a step and check its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::pipeline::Step;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Step,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Input path → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to `config.output`) → sha256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn build(command: Step, config: &RunConfig, outputs: &[PathBuf]) -> Result<Self> {
        let inputs = config
            .input_paths()?
            .iter()
            .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
            .collect::<Result<_>>()?;
        let outputs = outputs
            .iter()
            .map(|name| Ok((name.display().to_string(), sha256_file(&config.output.join(name))?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            command,
            version: VERSION.to_string(),
            seed: config.seed,
            config: config.clone(),
            inputs,
            outputs,
        })
    }

    pub fn file_name(command: Step) -> String {
        format!("{}.manifest.json", command.name())
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.config.output.join(Self::file_name(self.command));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Names whose hashes differ between `self` and `other` (or are missing
    /// from either).
    pub fn differing_outputs(&self, other: &Manifest) -> Vec<String> {
        let mut names: Vec<&String> = self.outputs.keys().chain(other.outputs.keys()).collect();
        names.sort();
        names.dedup();
        names
            .into_iter()
            .filter(|n| self.outputs.get(*n) != other.outputs.get(*n))
            .cloned()
            .collect()
    }

    pub fn changed_inputs(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for (path, hash) in &self.inputs {
            let p = Path::new(path);
            if !p.is_file() || &sha256_file(p)? != hash {
                out.push(path.clone());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
