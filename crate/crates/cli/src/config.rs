//! Pipeline settings. Command-line flags override the config file, which
//! overrides the built-in defaults.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use credigraph_core::embedding::{DEFAULT_DIM, DEFAULT_MRL_DIM};
use credigraph_core::labels::SPLIT_RATIOS;
use credigraph_core::text::DEFAULT_MAX_CHARS;

use crate::error::InputContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Minimum raw total degree is `threshold + 1`.
    pub threshold: i64,
    /// Archive files per graph-construction batch.
    pub batch_size: usize,
    pub embedding_dim: usize,
    pub mrl_dim: usize,
    pub split: [f64; 3],
    pub fanouts: Vec<usize>,
    pub workers: usize,
    pub seed: u64,
    pub max_chars: usize,
    /// Texts per embedding-provider request.
    pub embed_batch_size: usize,
    /// Documents held in memory per sorted run while grouping text.
    pub run_capacity: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            threshold: 3,
            batch_size: 300,
            embedding_dim: DEFAULT_DIM,
            mrl_dim: DEFAULT_MRL_DIM,
            split: SPLIT_RATIOS,
            fanouts: vec![50, 50, 50],
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()).min(8),
            seed: 0,
            max_chars: DEFAULT_MAX_CHARS,
            embed_batch_size: 32,
            run_capacity: 100_000,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).input(|| format!("reading config {}", path.display()))?;
        let config: Config = toml::from_str(&text).input(|| format!("parsing config {}", path.display()))?;
        config.validate().input(|| format!("config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.batch_size > 0, "batch_size must be positive");
        anyhow::ensure!(self.embedding_dim > 0, "embedding_dim must be positive");
        anyhow::ensure!(
            (1..=self.embedding_dim).contains(&self.mrl_dim),
            "mrl_dim must lie in 1..=embedding_dim"
        );
        anyhow::ensure!(self.max_chars > 0, "max_chars must be positive");
        anyhow::ensure!(self.run_capacity > 0, "run_capacity must be positive");
        anyhow::ensure!(
            self.split.iter().all(|r| (0.0..=1.0).contains(r)) && (self.split.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            "split ratios must be non-negative and sum to 1"
        );
        Ok(())
    }

    /// Worker count, with 0 meaning one.
    pub fn workers(&self) -> usize {
        self.workers.max(1)
    }
}

/// Parses `60/20/20`, `0.6,0.2,0.2` and similar into ratios.
pub fn parse_split(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(['/', ','])
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad split component `{p}`")))
        .collect::<Result<_, _>>()?;
    let [a, b, c] = parts[..] else {
        return Err(format!("split needs three parts, got `{s}`"));
    };
    let total = a + b + c;
    if total <= 0.0 {
        return Err("split parts must sum to a positive number".into());
    }
    Ok([a / total, b / total, c / total])
}

pub fn parse_fanouts(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad fanout `{p}`")))
        .collect()
}

pub fn scratch_dir() -> Option<std::path::PathBuf> {
    std::env::var_os("CREDIGRAPH_SCRATCH").map(Into::into)
}

pub fn ensure_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
