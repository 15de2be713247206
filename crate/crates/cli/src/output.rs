//! Writes run artifacts and the metadata sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::manifest::RunManifest;
use crate::runner::{RunError, RunOutput};

pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Serialize)]
pub struct Metadata {
    pub kind: String,
    pub seed: u64,
    pub version: String,
    pub workers: usize,
    pub started_unix_seconds: u64,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub manifest: serde_json::Value,
}

impl Metadata {
    pub fn new(manifest: &RunManifest, output: &RunOutput, workers: usize, started: u64, wall: f64) -> Self {
        Self {
            kind: manifest.kind().name().into(),
            seed: manifest.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            workers,
            started_unix_seconds: started,
            wall_time_seconds: wall,
            outputs: output.artifacts.iter().map(|a| a.file_name.clone()).collect(),
            summary: output.summary.clone(),
            manifest: manifest.to_json(),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// Writes every table and the metadata into `dir`, returning the CSV paths.
pub fn write_outputs(dir: &Path, output: &RunOutput, metadata: &Metadata) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    for artifact in &output.artifacts {
        let path = dir.join(&artifact.file_name);
        let file = fs::File::create(&path).map_err(|e| io(&path, e))?;
        let mut out = std::io::BufWriter::new(file);
        artifact.table.write_csv(&mut out).map_err(|e| io(&path, e))?;
        std::io::Write::flush(&mut out).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    let path = dir.join(METADATA_FILE);
    let json = serde_json::to_string_pretty(metadata).expect("metadata serializes");
    fs::write(&path, json + "\n").map_err(|e| io(&path, e))?;
    Ok(written)
}
