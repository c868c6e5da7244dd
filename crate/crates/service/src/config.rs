use std::path::{Path, PathBuf};

use gridops_core::accounting::UsageRecord;
use gridops_core::fabric::{Fabric, FabricSpec};
use gridops_core::fixtures::misconfigured_fabric;
use gridops_core::probes::{AlarmPolicy, ProbeSpec};
use gridops_core::storage_ops::DetectionConfig;
use gridops_core::topology::{DowntimeWindow, RegistryEntry, WhitelistPolicy};
use gridops_core::Timestamp;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid scenario {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Generated fabrics, addressed by name from scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", rename_all = "snake_case")]
pub enum Builtin {
    /// 108 SEs of which 17 start publishing wrong figures at `onset`.
    Misconfigured {
        #[serde(default)]
        onset: Timestamp,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FabricSource {
    /// Relative paths resolve against the scenario file's directory.
    Path { path: PathBuf },
    Builtin(Builtin),
    Inline(FabricSpec),
}

fn default_interval() -> u64 {
    30
}

fn default_threshold() -> f64 {
    0.80
}

fn default_top_n() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub fabric: FabricSource,
    /// One probe per resource kind at the scan interval when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<ProbeSpec>>,
    #[serde(default)]
    pub whitelist: WhitelistPolicy,
    #[serde(default)]
    pub alarms: AlarmPolicy,
    #[serde(default)]
    pub detection: DetectionConfig,
    /// Minutes between cycles.
    #[serde(default = "default_interval")]
    pub interval: u64,
    #[serde(default = "default_threshold")]
    pub heavy_user_threshold: f64,
    #[serde(default = "default_top_n")]
    pub heavy_user_top_n: usize,
    /// Minutes of simulated time to run.
    pub duration: u64,
    #[serde(default)]
    pub seed: u64,
    /// Replaces the registry derived from the fabric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<Vec<RegistryEntry>>,
    #[serde(default)]
    pub downtimes: Vec<DowntimeWindow>,
    #[serde(default)]
    pub usage: Vec<UsageRecord>,
}

impl ScenarioConfig {
    /// A config over an inline fabric with every other field at its default.
    pub fn new(fabric: FabricSpec, duration: u64) -> Self {
        Self {
            fabric: FabricSource::Inline(fabric),
            probes: None,
            whitelist: WhitelistPolicy::default(),
            alarms: AlarmPolicy::default(),
            detection: DetectionConfig::default(),
            interval: default_interval(),
            heavy_user_threshold: default_threshold(),
            heavy_user_top_n: default_top_n(),
            duration,
            seed: 0,
            registry: None,
            downtimes: Vec::new(),
            usage: Vec::new(),
        }
    }

    /// Reads, resolves and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ConfigError::NotFound(path.to_owned()),
            _ => ConfigError::Io {
                path: path.to_owned(),
                source: e,
            },
        })?;
        let config: ScenarioConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let config = config.resolve(base)?;
        config.validate()?;
        Ok(config)
    }

    /// Replaces file and builtin fabric references by the inline spec.
    pub fn resolve(mut self, base: &Path) -> Result<Self, ConfigError> {
        let spec = match &self.fabric {
            FabricSource::Inline(_) => return Ok(self),
            FabricSource::Builtin(Builtin::Misconfigured { onset }) => misconfigured_fabric(self.seed, *onset).spec,
            FabricSource::Path { path } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                let text = std::fs::read_to_string(&full).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => ConfigError::NotFound(full.clone()),
                    _ => ConfigError::Io {
                        path: full.clone(),
                        source: e,
                    },
                })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: full, source: e })?
            }
        };
        self.fabric = FabricSource::Inline(spec);
        Ok(self)
    }

    /// The inline fabric spec. Panics on an unresolved config.
    pub fn fabric_spec(&self) -> &FabricSpec {
        match &self.fabric {
            FabricSource::Inline(spec) => spec,
            other => panic!("unresolved fabric source {other:?}"),
        }
    }

    pub fn probe_specs(&self) -> Vec<ProbeSpec> {
        self.probes.clone().unwrap_or_else(|| ProbeSpec::defaults(self.interval))
    }

    pub fn cycles(&self) -> u64 {
        self.duration / self.interval
    }

    /// Checks every invariant of a resolved config without side effects.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        if self.interval == 0 {
            return Err(invalid("interval must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.heavy_user_threshold) {
            return Err(invalid(format!(
                "heavy_user_threshold {} is outside [0, 1]",
                self.heavy_user_threshold
            )));
        }
        if self.heavy_user_top_n == 0 {
            return Err(invalid("heavy_user_top_n must be positive".into()));
        }
        let tol = self.detection.relative_tolerance;
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(invalid(format!("detection tolerance {tol} must be non-negative")));
        }
        self.whitelist.validate().map_err(|e| invalid(e.to_string()))?;
        self.alarms.validate().map_err(|e| invalid(e.to_string()))?;
        for p in self.probe_specs() {
            p.validate().map_err(|e| invalid(e.to_string()))?;
        }
        for d in &self.downtimes {
            if d.start >= d.end {
                return Err(invalid(format!("downtime for {} must start before it ends", d.resource_id)));
            }
        }
        match &self.fabric {
            FabricSource::Inline(spec) => {
                Fabric::new(spec).map_err(|e| invalid(format!("fabric: {e}")))?;
            }
            _ => return Err(invalid("fabric reference is not resolved".into())),
        }
        Ok(())
    }
}
