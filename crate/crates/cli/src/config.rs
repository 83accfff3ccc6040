//! Optional TOML config; command-line flags take precedence over it, and it over the defaults.

use std::path::Path;

use anyhow::{Context, Result};
use relkit::model::ArchitectureKind;
use relkit::train::{OptimizerKind, TrainConfig};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub arch: Option<ArchitectureKind>,
    pub ds: Option<usize>,
    pub dr: Option<usize>,
    #[serde(rename = "do")]
    pub dobj: Option<usize>,
    pub xyz: Option<(usize, usize, usize)>,
    pub embedder: Option<bool>,
    pub init_gain: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub optimizer: Option<OptimizerKind>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub iterations: Option<usize>,
    pub log_every: Option<usize>,
    pub weight_decay: Option<f64>,
    pub plateau_window: Option<usize>,
    pub plateau_tolerance: Option<f64>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Flag, then config file, then `RELKIT_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> Result<u64> {
    if let Some(s) = flag.or(file.seed) {
        return Ok(s);
    }
    match std::env::var("RELKIT_SEED") {
        Ok(v) => v.trim().parse().with_context(|| format!("RELKIT_SEED={v:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

/// Training flags shared by every subcommand that fits something.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainFlags {
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Plateau window for early stopping; 0 disables it.
    #[arg(long)]
    pub plateau_window: Option<usize>,
    #[arg(long)]
    pub plateau_tolerance: Option<f64>,
}

pub fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse()
}

impl TrainFlags {
    pub fn resolve(&self, file: &TrainSection, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            optimizer: self.optimizer.or(file.optimizer).unwrap_or(d.optimizer),
            learning_rate: self.lr.or(file.learning_rate).unwrap_or(d.learning_rate),
            batch_size: self.batch.or(file.batch_size).unwrap_or(d.batch_size),
            iterations: self.iters.or(file.iterations).unwrap_or(d.iterations),
            seed,
            log_every: self.log_every.or(file.log_every).unwrap_or(d.log_every),
            weight_decay: self.weight_decay.or(file.weight_decay).unwrap_or(d.weight_decay),
            plateau_window: self.plateau_window.or(file.plateau_window).unwrap_or(d.plateau_window),
            plateau_tolerance: self.plateau_tolerance.or(file.plateau_tolerance).unwrap_or(d.plateau_tolerance),
            snapshot_faithfulness: false,
        }
    }
}
