//! Per-run manifest: the command, its full configuration, the library
//! version and the seed, plus the files the run wrote.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_error, HarnessError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: &impl Serialize) -> Result<Self, HarnessError> {
        Ok(Self {
            tool: "tailcal".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config: serde_json::to_value(config)?,
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(io_error(&path))
    }

    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_error(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("diagnose", Some(7), &serde_json::json!({"thresholds": [0.9]})).unwrap();
        m.outputs.push("combined_t0.csv".into());
        m.write(dir.path()).unwrap();
        let back = Manifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.version, env!("CARGO_PKG_VERSION"));
    }
}
