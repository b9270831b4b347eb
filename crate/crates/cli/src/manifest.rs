//! Run manifests: what was run, with which inputs, written before the work
//! starts. No timestamps, so reruns produce the same file.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    /// SHA-256 of the config document or of the canonical option JSON.
    pub config_sha256: String,
    pub seed: u64,
    pub miolab_version: &'static str,
    pub checkpoint_format: u32,
    pub parallel_feature: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_manifest(path: &Path, command: &str, config: &[u8], seed: u64) -> CliResult<()> {
    let m = Manifest {
        command,
        config_sha256: sha256_hex(config),
        seed,
        miolab_version: env!("CARGO_PKG_VERSION"),
        checkpoint_format: miolab_core::model::CHECKPOINT_FORMAT_VERSION,
        parallel_feature: miolab_core::par::mode() == miolab_core::par::ExecMode::Parallel,
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    write_text(path, &(text + "\n"))
}

/// Manifest path for a single-file output: `x.csv` → `x.manifest.json`.
pub fn manifest_beside(out: &Path) -> std::path::PathBuf {
    out.with_extension("manifest.json")
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
