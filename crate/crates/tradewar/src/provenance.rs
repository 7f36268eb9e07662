use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identifies the program and inputs behind an output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(command: &str, config_text: &str, seed: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: hash_hex(config_text),
            seed,
        }
    }

    pub fn comment_line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# {} {} command={} config_sha256={} seed={}",
            self.tool, self.version, self.command, self.config_hash, seed
        )
    }
}

pub fn hash_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
