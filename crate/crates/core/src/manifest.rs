//! Run manifest: the reproducibility record emitted by every command, on
//! success and on failure alike.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;
use crate::ingest::RejectReport;
use crate::trips::PairingReport;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub status: String,
    /// Failure details when status is "error".
    pub error: Option<ManifestError>,
    pub config: RunConfig,
    /// SHA-256 of each input file actually read.
    pub input_digests: BTreeMap<String, String>,
    /// Per-loader row accounting.
    pub loader_stats: BTreeMap<String, RejectReport>,
    pub pairing: Option<PairingReport>,
    /// Wall-clock per stage, in order of execution.
    pub stage_durations_ms: Vec<(String, u128)>,
    /// Files written by this run, relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestError {
    pub stage: String,
    pub cause: String,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: "ok".to_string(),
            error: None,
            config: config.clone(),
            input_digests: BTreeMap::new(),
            loader_stats: BTreeMap::new(),
            pairing: None,
            stage_durations_ms: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

/// SHA-256 hex digest of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"hello").unwrap();
        f.flush().unwrap();
        let a = file_digest(f.path()).unwrap();
        let b = file_digest(f.path()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        // Known SHA-256 of "hello".
        assert_eq!(
            a,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }
}
