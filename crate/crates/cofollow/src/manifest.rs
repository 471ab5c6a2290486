//! Run manifests: every file-producing command records its resolved
//! parameters, input digests, and seed alongside the output, so any artifact
//! can be traced back to the exact invocation that produced it.
//!
//! Manifests carry no timestamps; identical inputs and flags produce
//! byte-identical manifests.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub inputs: BTreeMap<String, InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        RunManifest {
            tool: "cofollow",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            parameters: BTreeMap::new(),
            inputs: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn parameter(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).expect("parameter is serializable"),
        );
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    /// Registers an input file under `name`, recording its sha256 digest.
    pub fn input(&mut self, name: &str, path: &Path) -> std::io::Result<&mut Self> {
        let mut file = std::fs::File::open(path)?;
        let mut hasher = Sha256::new();
        let mut buffer = [0u8; 64 * 1024];
        loop {
            let n = file.read(&mut buffer)?;
            if n == 0 {
                break;
            }
            hasher.update(&buffer[..n]);
        }
        self.inputs.insert(
            name.to_string(),
            InputDigest {
                path: path.display().to_string(),
                sha256: hex::encode(hasher.finalize()),
            },
        );
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    /// Writes `<output>.manifest.json` next to an output artifact.
    pub fn write_alongside(&self, output: &Path) -> std::io::Result<std::path::PathBuf> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = output.with_file_name(name);
        std::fs::write(&path, self.to_json())?;
        Ok(path)
    }
}
