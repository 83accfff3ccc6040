use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a subcommand and check its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub started_unix: u64,
    pub duration_secs: f64,
    pub relkit_version: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {} for hashing", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct Recorder {
    subcommand: String,
    start: Instant,
    started_unix: u64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(subcommand: &str) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { subcommand: subcommand.into(), start: Instant::now(), started_unix, inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    /// Hashes every recorded file and writes the manifest atomically.
    pub fn finish(self, path: &Path, config: impl Serialize, seeds: serde_json::Value) -> Result<()> {
        let record = |ps: &[PathBuf]| -> Result<Vec<FileRecord>> {
            ps.iter().map(|p| Ok(FileRecord { path: p.display().to_string(), sha256: sha256_file(p)? })).collect()
        };
        let m = RunManifest {
            subcommand: self.subcommand,
            argv: std::env::args().collect(),
            config: serde_json::to_value(config)?,
            seeds,
            inputs: record(&self.inputs)?,
            outputs: record(&self.outputs)?,
            started_unix: self.started_unix,
            duration_secs: self.start.elapsed().as_secs_f64(),
            relkit_version: env!("CARGO_PKG_VERSION").into(),
        };
        let text = serde_json::to_string_pretty(&m)? + "\n";
        relkit::eval::report::write_text(path, &text)?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }
}

/// `<out>.manifest.json` unless a path was given.
pub fn default_path(explicit: Option<&Path>, out: &Path) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let mut s = out.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        }
    }
}
