//! Run configuration file: everything structured lives here, flags only
//! override the seed, mode and paths.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use admon_core::generator::{AnomalyPolicy, AnomalySpec, ScheduleEntry};
use admon_core::monitor::HistoryFlag;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon_s: u64,
    /// Catalog file; the embedded default is used when absent.
    pub catalog: Option<PathBuf>,
    /// Transition matrices file; synthetic defaults are used when absent.
    pub matrices: Option<PathBuf>,
    /// Sensor class parameters file; embedded defaults when absent.
    pub sensors: Option<PathBuf>,
    pub schedule: Vec<ScheduleEntry>,
    pub anomalies: AnomalySetting,
    pub history_flags: Vec<HistoryFlag>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            horizon_s: 31_536_000,
            catalog: None,
            matrices: None,
            sensors: None,
            schedule: vec![
                ScheduleEntry { from_month: 1, to_month: 3, profile: 1 },
                ScheduleEntry { from_month: 4, to_month: 6, profile: 3 },
                ScheduleEntry { from_month: 7, to_month: 9, profile: 6 },
                ScheduleEntry { from_month: 10, to_month: 10, profile: 9 },
                ScheduleEntry { from_month: 11, to_month: 11, profile: 8 },
                ScheduleEntry { from_month: 12, to_month: 12, profile: 9 },
            ],
            anomalies: AnomalySetting::Preset("derive".into()),
            history_flags: Vec::new(),
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnomalySetting {
    /// "derive" or "none".
    Preset(String),
    Specs(Vec<AnomalySpec>),
}

impl AnomalySetting {
    pub fn to_policy(&self) -> Result<AnomalyPolicy> {
        match self {
            AnomalySetting::Preset(s) if s == "derive" => Ok(AnomalyPolicy::Derive),
            AnomalySetting::Preset(s) if s == "none" => Ok(AnomalyPolicy::None),
            AnomalySetting::Preset(s) => {
                anyhow::bail!("anomalies must be \"derive\", \"none\" or a spec list, got {s:?}")
            }
            AnomalySetting::Specs(specs) => Ok(AnomalyPolicy::Explicit(specs.clone())),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        Ok(cfg)
    }

    /// Loads the given config, or the defaults when no path is set.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
