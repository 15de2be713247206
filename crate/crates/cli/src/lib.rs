//! Manifest-driven runner for the robust-ols experiments.

pub mod catalog;
pub mod manifest;
pub mod output;
pub mod runner;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use catalog::list_experiments;
pub use manifest::{ExperimentKind, ManifestError, Params, RunManifest};
pub use runner::{execute, Artifact, RunError, RunOutput};

pub const WORKERS_ENV: &str = "ROBUST_OLS_WORKERS";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses one per logical core.
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub workers: usize,
}

#[derive(Debug)]
pub enum CliError {
    Manifest(ManifestError),
    Run(RunError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Manifest(_) => 2,
            CliError::Run(e) => e.exit_code(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Manifest(e) => e.fmt(f),
            CliError::Run(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

/// Loads, runs and writes one manifest inside a dedicated worker pool.
pub fn run_manifest(path: &Path, options: &RunOptions) -> Result<RunReport, CliError> {
    let mut manifest = RunManifest::load(path).map_err(CliError::Manifest)?;
    if let Some(seed) = options.seed {
        manifest.seed = seed;
    }
    let output_dir = options.output.clone().unwrap_or_else(|| manifest.output_dir.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Run(RunError::Io(format!("cannot start worker pool: {e}"))))?;
    let workers = pool.current_num_threads();

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let output = pool.install(|| execute(&manifest)).map_err(CliError::Run)?;
    let wall = clock.elapsed().as_secs_f64();

    let metadata = output::Metadata::new(&manifest, &output, workers, started, wall);
    let files = output::write_outputs(&output_dir, &output, &metadata).map_err(CliError::Run)?;
    Ok(RunReport { output_dir, files, workers })
}
