//! Run manifests: everything that determines a run's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvFileRef {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Resolved configuration, defaults included.
    pub config: Value,
    #[serde(default)]
    pub env_file: Option<EnvFileRef>,
    /// Hash of the environment actually simulated, when there is one.
    #[serde(default)]
    pub env_sha256: Option<String>,
    /// Where the run was written; not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Manifest {
    /// Hex SHA-256 of the manifest without its output directory.
    pub fn hash(&self) -> String {
        let mut body = self.clone();
        body.output_dir = None;
        sha256_hex(&serde_json::to_vec(&body).expect("manifest serializes"))
    }

    /// Treats `value` as a manifest when it carries the manifest keys.
    pub fn detect(value: &Value) -> Option<Result<Manifest, CliError>> {
        let obj = value.as_object()?;
        if !(obj.contains_key("command") && obj.contains_key("config") && obj.contains_key("version")) {
            return None;
        }
        Some(serde_json::from_value(value.clone()).map_err(|e| CliError::Config(format!("bad manifest: {e}"))))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `out/<first 16 hex digits of the manifest hash>`.
pub fn run_dir(out: &Path, manifest: &Manifest) -> PathBuf {
    out.join(&manifest.hash()[..16])
}
