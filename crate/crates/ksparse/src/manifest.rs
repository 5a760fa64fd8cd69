//! Reproducible run manifests: every command records its fully resolved
//! configuration, seeds, software version, and a dataset fingerprint, so a
//! run can be reproduced bit-exactly on the same build.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Argument list that reproduces this run.
    pub argv_equivalent: Vec<String>,
    pub version: String,
    /// Fully resolved configuration after flag/file/default merging.
    pub config: serde_json::Value,
    pub seeds: serde_json::Value,
    pub dataset_fingerprint: Option<String>,
    pub wall_clock_seconds: f64,
    pub diagnostics: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        RunManifest {
            command: command.into(),
            argv_equivalent: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::Value::Null,
            seeds: serde_json::Value::Null,
            dataset_fingerprint: None,
            wall_clock_seconds: 0.0,
            diagnostics: serde_json::Value::Null,
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Wall-clock stopwatch for manifest timing.
pub struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch(Instant::now())
    }

    pub fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

impl Default for Stopwatch {
    fn default() -> Self {
        Self::start()
    }
}
