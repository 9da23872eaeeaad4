//! Run configuration file: `[evo]`, `[proxy]` and `[synth]` tables, each
//! optional, with unknown keys rejected.

use std::fs;
use std::path::Path;

use mtga_core::data_io::SynthConfig;
use mtga_core::proxy::ProxyConfig;
use mtga_core::variation::EvoConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub evo: EvoConfig,
    pub proxy: ProxyConfig,
    pub synth: SynthConfig,
}

impl RunConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfigFile = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let invalid = |e: mtga_core::Error| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        cfg.evo.validate().map_err(invalid)?;
        cfg.proxy.validate().map_err(invalid)?;
        cfg.synth.validate().map_err(invalid)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Defaults when no path is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
