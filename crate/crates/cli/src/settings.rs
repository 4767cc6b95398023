//! `--config` file: flat TOML keys, each a fallback for the flag of the
//! same name. Command-line flags take precedence over the file, which takes
//! precedence over built-in defaults.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    // gen
    pub method: Option<String>,
    pub units: Option<usize>,
    pub sr: Option<f64>,
    pub leak: Option<f64>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub input_scaling: Option<f64>,
    pub connectivity: Option<f64>,
    pub connectivity_in: Option<f64>,
    pub d_in: Option<usize>,
    pub d_out: Option<usize>,
    pub feedback: Option<bool>,
    pub bias: Option<bool>,
    pub washout: Option<usize>,
    // run / train
    pub engine: Option<String>,
    pub alpha: Option<f64>,
    pub train_method: Option<String>,
    // bench
    pub tasks: Option<String>,
    pub methods: Option<String>,
    pub seeds: Option<usize>,
    pub grid: Option<String>,
    pub share_states: Option<bool>,
    pub jobs: Option<usize>,
    pub repeats: Option<usize>,
    pub max_delay: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }
}
