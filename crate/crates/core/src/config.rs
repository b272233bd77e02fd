//! File-backed configuration shared by every subcommand.
//!
//! The file is TOML with one section per concern. Every field has a default,
//! so an empty file (or no file) is valid, and command-line flags override
//! whatever the file says.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::FilterOptions;
use crate::ga::GaConfig;
use crate::orchestrator::CampaignConfig;
use crate::plant::SimConfig;
use crate::service::{LatencyModel, ServiceConfig, SIM_VERSION};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignSettings {
    pub service_label: String,
    pub client_label: String,
    pub service_url: String,
    pub n_trials: usize,
    pub populations_per_trial: usize,
    pub trial_interval_s: f64,
    pub out_dir: PathBuf,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        let c = CampaignConfig::default();
        CampaignSettings {
            service_label: c.service_label,
            client_label: c.client_label,
            service_url: c.service_url,
            n_trials: c.n_trials,
            populations_per_trial: c.populations_per_trial,
            trial_interval_s: c.trial_interval_s,
            out_dir: c.out_dir,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeSettings {
    pub port: u16,
    pub sim_version: u32,
}

impl Default for ServeSettings {
    fn default() -> Self {
        ServeSettings { port: 8080, sim_version: SIM_VERSION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeSettings {
    pub inputs: Vec<String>,
    pub threshold: f64,
    pub alpha: f64,
    pub strict_seed_check: bool,
    pub out_dir: PathBuf,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        AnalyzeSettings {
            inputs: Vec::new(),
            threshold: 1.0,
            alpha: 0.05,
            strict_seed_check: false,
            out_dir: PathBuf::from("report"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RootConfig {
    pub sim: SimConfig,
    pub ga: GaConfig,
    pub campaign: CampaignSettings,
    pub latency: LatencyModel,
    pub serve: ServeSettings,
    pub analyze: AnalyzeSettings,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig {
            sim: SimConfig::default(),
            ga: GaConfig::default(),
            campaign: CampaignSettings::default(),
            latency: LatencyModel::none(),
            serve: ServeSettings::default(),
            analyze: AnalyzeSettings::default(),
        }
    }
}

impl RootConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse { path: path.to_path_buf(), source },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            source: Box::new(source),
        })
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn service_config(&self) -> ServiceConfig {
        ServiceConfig {
            sim: self.sim,
            sim_version: self.serve.sim_version,
            latency: self.latency,
        }
    }

    pub fn campaign_config(&self) -> CampaignConfig {
        let c = &self.campaign;
        CampaignConfig {
            service_label: c.service_label.clone(),
            client_label: c.client_label.clone(),
            service_url: c.service_url.clone(),
            n_trials: c.n_trials,
            populations_per_trial: c.populations_per_trial,
            ga: self.ga.clone(),
            trial_interval_s: c.trial_interval_s,
            out_dir: c.out_dir.clone(),
        }
    }

    pub fn filter_options(&self, seed_fitness: Option<f64>) -> FilterOptions {
        FilterOptions {
            threshold: self.analyze.threshold,
            min_seed_fitness: if self.analyze.strict_seed_check { seed_fitness } else { None },
        }
    }

    /// Checks the invariants every module imposes on its slice.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: String| ConfigError::Invalid(e);
        self.sim.validate().map_err(|e| inv(e.to_string()))?;
        self.latency.validate().map_err(inv)?;
        self.campaign_config().validate().map_err(|e| inv(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.analyze.alpha) || self.analyze.alpha == 0.0 {
            return Err(inv(format!("alpha must be in (0, 1], got {}", self.analyze.alpha)));
        }
        if !self.analyze.threshold.is_finite() {
            return Err(inv("threshold must be finite".into()));
        }
        Ok(())
    }
}
