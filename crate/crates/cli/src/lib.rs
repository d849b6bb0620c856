//! Reproduction harness: named experiments that write CSV/JSON outputs and a
//! manifest of checksums and pinned acceptance verdicts.

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;
use crate::experiments::Artifact;
use crate::manifest::{evaluate_verdicts, sha256_file, OutputFile, RunManifest, MANIFEST_FILE};

/// Where and how to run; neither affects the outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    /// Output root; each experiment writes into `<out>/<experiment>/`.
    pub out: PathBuf,
    /// Worker threads; 0 means one per processor.
    pub workers: usize,
}

pub fn experiment_dir(out: &Path, config: &ExperimentConfig) -> PathBuf {
    out.join(config.experiment.name())
}

/// Runs the experiment, writes its outputs and manifest, and returns the
/// manifest.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunManifest> {
    config.validate()?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .context("building worker pool")?;
    let workers = pool.current_num_threads();
    let outcome = pool.install(|| experiments::compute(config))?;

    let dir = experiment_dir(&options.out, config);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let hash = config.hash();
    let mut outputs = Vec::new();
    for artifact in &outcome.artifacts {
        let path = dir.join(artifact.file());
        let content = match artifact {
            Artifact::Csv(table) => table.render(&hash),
            Artifact::Text { content, .. } => content.clone(),
        };
        std::fs::write(&path, &content).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(OutputFile {
            file: artifact.file().to_owned(),
            sha256: sha256_file(&path)?,
            bytes: content.len() as u64,
        });
    }
    let mut verdicts = outcome.verdicts;
    evaluate_verdicts(&dir, &mut verdicts)?;
    let manifest = RunManifest {
        experiment: config.experiment.name().to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config: config.clone(),
        config_hash: hash,
        workers,
        outputs,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        pass: verdicts.iter().all(|v| v.pass),
        verdicts,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}
