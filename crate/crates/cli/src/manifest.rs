use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    /// File path, or `bundled:<name>` for built-in defaults.
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    /// RFC 3339; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<InputRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<InputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    now.to_rfc3339_opts(SecondsFormat::Secs, true)
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_owned(),
            args: std::env::args().skip(1).collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            timestamp: timestamp(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, source: impl Into<String>, bytes: &[u8]) {
        self.inputs.push(InputRecord { source: source.into(), sha256: sha256_hex(bytes) });
    }

    pub fn output(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.push(InputRecord { source: path.display().to_string(), sha256: sha256_hex(bytes) });
    }
}
