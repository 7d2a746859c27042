//! Run manifests: one JSON document per command invocation recording what
//! ran, with which merged config, and what it produced.

use serde::Serialize;
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Failure classified by who has to act: a config error (exit 2) is the
/// caller's to fix, an internal error (exit 1) is not.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Internal(smc_core::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Internal(e) => write!(f, "{e}"),
        }
    }
}

/// Errors surfacing from core mid-run. Contract and parse violations are
/// bad inputs; faults and output I/O are ours.
impl From<smc_core::Error> for CliError {
    fn from(e: smc_core::Error) -> Self {
        use smc_core::Error::*;
        match e {
            Contract(_) | Parse { .. } | MissingClass { .. } | Json(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Internal(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(smc_core::Error::Io(e))
    }
}

/// Canonical serialization of a config struct and its hash. Field order is
/// fixed by the struct declaration, so the hash is stable no matter how
/// the source file ordered its keys.
pub fn canonical<T: Serialize>(cfg: &T) -> (String, String) {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let hash = hex::encode(Sha256::digest(json.as_bytes()));
    (json, hash)
}

/// `<out>.manifest.json`, appended so the pairing stays self-evident.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    /// Embedded verbatim: these are exactly the hashed bytes.
    config: &'a RawValue,
    #[serde(rename = "config-hash")]
    config_hash: &'a str,
    artifacts: Vec<String>,
    wall_time_seconds: f64,
    exit_status: i32,
}

/// Writes the single manifest for a command run. `config_json` must be
/// the canonical serialization whose hash is `config_hash`.
pub fn write_manifest(
    out: &Path,
    command: &str,
    config_json: &str,
    config_hash: &str,
    artifacts: &[PathBuf],
    started: Instant,
    exit_status: i32,
) -> Result<(), CliError> {
    let config = RawValue::from_string(config_json.to_owned())
        .expect("canonical config is valid JSON");
    let manifest = RunManifest {
        command,
        config: &config,
        config_hash,
        artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        exit_status,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(manifest_path(out), text)?;
    Ok(())
}
