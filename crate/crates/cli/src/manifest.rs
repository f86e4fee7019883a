// SPDX-License-Identifier: Apache-2.0
//! Artifact writing, content hashing and manifest verification.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::tasks::{Artifact, Outcome};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub library_version: String,
    pub task: String,
    pub config: Value,
    pub sectors: Vec<Value>,
    pub wall_times: BTreeMap<String, f64>,
    pub artifacts: Vec<ArtifactRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Write every artifact plus summary.json, then the manifest covering them.
pub fn write_outputs(cfg: &RunConfig, outcome: &Outcome) -> Result<Manifest, CliError> {
    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut summary = serde_json::to_string_pretty(&outcome.summary).expect("serializable");
    summary.push('\n');
    let summary = Artifact { name: "summary.json".into(), bytes: summary.into_bytes() };
    let mut records = Vec::new();
    for a in outcome.artifacts.iter().chain(std::iter::once(&summary)) {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(|e| io_err(&path, e))?;
        records.push(ArtifactRecord { path: a.name.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() as u64 });
    }
    let manifest = Manifest {
        tool: "scarlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        library_version: scarlab::VERSION.into(),
        task: cfg.task.name().into(),
        config: serde_json::to_value(cfg).expect("serializable"),
        sectors: outcome.sectors.iter().map(|s| serde_json::to_value(s).expect("serializable")).collect(),
        wall_times: outcome.timings.iter().cloned().collect(),
        artifacts: records,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

#[derive(Serialize, Debug, Default)]
pub struct VerifyReport {
    pub ok: bool,
    pub checked: usize,
    pub missing: Vec<String>,
    pub mismatched: Vec<String>,
}

pub fn verify(dir: &Path) -> Result<VerifyReport, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut report = VerifyReport { checked: manifest.artifacts.len(), ..Default::default() };
    for rec in &manifest.artifacts {
        match fs::read(dir.join(&rec.path)) {
            Ok(bytes) if sha256_hex(&bytes) == rec.sha256 => {}
            Ok(_) => report.mismatched.push(rec.path.clone()),
            Err(_) => report.missing.push(rec.path.clone()),
        }
    }
    report.ok = report.missing.is_empty() && report.mismatched.is_empty();
    Ok(report)
}
