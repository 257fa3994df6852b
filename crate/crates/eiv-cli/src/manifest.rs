//! Provenance manifest embedded in every output file.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub wall_clock_secs: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub tool_version: String,
    pub timings: Timings,
}

impl RunManifest {
    pub fn new(command: &str, inputs: &[&Path], seed: u64) -> Result<Self, CliError> {
        let mut digests = Vec::with_capacity(inputs.len());
        for path in inputs {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            let hash = Sha256::digest(&bytes);
            let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
            digests.push(InputDigest {
                path: path.display().to_string(),
                sha256: hex,
            });
        }
        Ok(RunManifest {
            command: command.to_string(),
            inputs: digests,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timings: Timings {
                wall_clock_secs: 0.0,
            },
        })
    }
}
