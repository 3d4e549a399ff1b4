//! Experiment configuration documents.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::fail::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Divergence,
    Rate,
    Simulate,
    Covering,
    Chernoff,
    Spectral,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Divergence => "divergence",
            Command::Rate => "rate",
            Command::Simulate => "simulate",
            Command::Covering => "covering",
            Command::Chernoff => "chernoff",
            Command::Spectral => "spectral",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub params: serde_json::Map<String, Value>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.inputs.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = cfg.output.as_mut() {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    /// Digest of everything that determines the results: command, input
    /// contents, params and seed. Paths and the output location are left out.
    pub fn hash(&self, inputs_sha256: &str) -> String {
        let doc = serde_json::json!({
            "command": self.command,
            "inputs_sha256": inputs_sha256,
            "params": self.params,
            "seed": self.seed,
        });
        hex(&Sha256::digest(serde_json::to_vec(&doc).expect("serializable")))
    }

    pub fn input(&self, name: &str) -> Result<&Path, Failure> {
        self.inputs
            .get(name)
            .map(PathBuf::as_path)
            .ok_or_else(|| Failure::config(format!("{} requires inputs.{name}", self.command.name())))
    }

    /// Checks that every referenced file exists and digests the contents.
    /// Returns per-input digests and a combined digest.
    pub fn hash_inputs(&self) -> Result<(BTreeMap<String, String>, String), Failure> {
        let mut per = BTreeMap::new();
        let mut all = Sha256::new();
        for (name, path) in &self.inputs {
            let bytes = std::fs::read(path)
                .map_err(|e| Failure::input(format!("inputs.{name} = {}: {e}", path.display())))?;
            let h = Sha256::digest(&bytes);
            all.update(name.as_bytes());
            all.update([0u8]);
            all.update(h);
            per.insert(name.clone(), hex(&h));
        }
        Ok((per, hex(&all.finalize())))
    }

    /// Typed view of `params` for a command.
    pub fn params<T: serde::de::DeserializeOwned>(&self) -> Result<T, Failure> {
        serde_json::from_value(Value::Object(self.params.clone()))
            .map_err(|e| Failure::config(format!("params for {}: {e}", self.command.name())))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
