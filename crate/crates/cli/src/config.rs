//! Effective per-command configs: defaults, overlaid by a config file,
//! overlaid by explicit flags. The effective config is embedded verbatim
//! in every JSON summary, so a summary can be fed back via --config and
//! reproduce the run. Output location is deliberately not part of the
//! config: re-runs may target a different directory and still produce
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolveConfig {
    pub cost: Option<PathBuf>,
    pub visual: Option<PathBuf>,
    pub textual: Option<PathBuf>,
    pub lambda: f64,
    pub delta_v: f64,
    pub max_iters: usize,
    pub log_domain: bool,
    pub emit_plan: bool,
    pub emit_trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            cost: None,
            visual: None,
            textual: None,
            lambda: 0.1,
            delta_v: 0.01,
            max_iters: 1000,
            log_domain: true,
            emit_plan: false,
            emit_trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainCliConfig {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub noise_sigma: f64,
    pub dim: usize,
    pub tau: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub outer_steps: usize,
    pub seed: u64,
    pub init_sigma: f64,
    pub refresh_every: usize,
    pub lambda: f64,
    pub delta_v: f64,
    pub max_iters: usize,
    pub log_domain: bool,
    pub ablate: bool,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        Self {
            height: 8,
            width: 8,
            classes: 4,
            noise_sigma: 0.3,
            dim: 16,
            tau: 0.07,
            beta: 0.5,
            learning_rate: 0.05,
            outer_steps: 200,
            seed: 0,
            init_sigma: 0.8,
            refresh_every: 1,
            lambda: 0.1,
            delta_v: 0.01,
            max_iters: 1000,
            log_domain: true,
            ablate: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct HeatmapConfig {
    pub volume: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub noise_sigma: f64,
    pub dim: usize,
    pub seed: u64,
    pub class: usize,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            volume: None,
            model: None,
            height: 8,
            width: 8,
            classes: 4,
            noise_sigma: 0.0,
            dim: 16,
            seed: 0,
            class: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct VerifyConfig {
    pub trials: usize,
    pub max_size: usize,
    pub lambdas: Vec<f64>,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            max_size: 6,
            lambdas: vec![0.5, 0.1, 0.05],
            seed: 0,
        }
    }
}

/// Loads the base config: defaults when no file is given, otherwise the
/// file's content. A summary JSON (with a top-level "config" key) and a
/// bare config object are both accepted.
pub fn load_base<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config file {}", path.display()))?;
    let config_value = match value.get("config") {
        Some(inner) => inner.clone(),
        None => value,
    };
    serde_json::from_value(config_value)
        .with_context(|| format!("interpreting config file {}", path.display()))
}

#[derive(Serialize)]
struct Versions {
    covot: &'static str,
    cli: &'static str,
    format: u32,
}

#[derive(Serialize)]
struct Summary<'a, C: Serialize, R: Serialize> {
    config: &'a C,
    results: &'a R,
    versions: Versions,
}

/// Writes the {config, results, versions} summary for a command.
pub fn write_summary<C: Serialize, R: Serialize>(
    dir: &Path,
    config: &C,
    results: &R,
) -> Result<PathBuf> {
    let summary = Summary {
        config,
        results,
        versions: Versions {
            covot: covot::VERSION,
            cli: env!("CARGO_PKG_VERSION"),
            format: 1,
        },
    };
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).context("serializing summary")?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Creates the output directory if absent and returns it.
pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}
