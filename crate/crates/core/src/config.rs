//! Scenario configuration: one TOML document holding every parameter of a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autopilot::{AdaptiveFlags, AutopilotConfig, Limits, LoopRcac};
use crate::deadzone::DeadzoneConfig;
use crate::error::{Error, Result};
use crate::log::LOG_SCHEMA_VERSION;
use crate::metrics::MetricsConfig;
use crate::mission::MissionConfig;
use crate::rcac::RcacConfig;
use crate::vehicle::{SensorNoiseConfig, VehicleParams};

/// Version of the scenario file layout.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// The shipped default scenario, identical to `ScenarioConfig::default()`.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub log_file: String,
    pub report_file: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            log_file: "flight_log.csv".into(),
            report_file: "report.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub log_schema_version: u32,
    pub duration_s: f64,
    pub output: OutputConfig,
    pub vehicle: VehicleParams,
    pub autopilot: AutopilotConfig,
    pub mission: MissionConfig,
    pub noise: SensorNoiseConfig,
    pub metrics: MetricsConfig,
}

pub fn default_loop_rcac() -> LoopRcac {
    LoopRcac {
        position: RcacConfig {
            p0: 0.001,
            filter_coeffs: vec![-0.02],
            ..RcacConfig::default()
        },
        velocity: RcacConfig {
            p0: 0.05,
            filter_coeffs: vec![-0.01],
            ..RcacConfig::default()
        },
        attitude: RcacConfig {
            p0: 15.0,
            filter_coeffs: vec![-0.002],
            ..RcacConfig::default()
        },
        rate: RcacConfig {
            p0: 30.0,
            filter_coeffs: vec![-0.19],
            ..RcacConfig::default()
        },
    }
}

impl Default for AutopilotConfig {
    fn default() -> Self {
        AutopilotConfig {
            gr_gains: [0.95, 0.95, 0.95],
            gv_gains: [[1.5, 0.75, 0.1], [1.5, 0.75, 0.1], [8.0, 4.0, 0.2]],
            gv_integrator_limit: 1.0,
            gq_time_constant: 0.7,
            gw_gains: [[0.5, 6.0], [0.5, 6.0], [0.3, 1.0]],
            gw_integrator_limit: 1.0,
            outer_rate_hz: 50.0,
            inner_rate_hz: 250.0,
            adaptive: AdaptiveFlags::all(),
            rcac: default_loop_rcac(),
            deadzone: DeadzoneConfig::None,
            limits: Limits::default(),
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            log_schema_version: LOG_SCHEMA_VERSION,
            duration_s: 60.0,
            output: OutputConfig::default(),
            vehicle: VehicleParams::default(),
            autopilot: AutopilotConfig::default(),
            mission: MissionConfig::default(),
            noise: SensorNoiseConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

fn at(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::config(format!("{section}.{name}"), reason),
        Error::Config { path, reason } => Error::config(format!("{section}.{path}"), reason),
        other => Error::config(section, other.to_string()),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("byte {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            Error::config(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { path: p, reason } => Error::config(format!("{}: {p}", path.display()), reason),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    /// Validates every section; errors carry the dotted field path.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {CONFIG_SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.log_schema_version != LOG_SCHEMA_VERSION {
            return Err(Error::config(
                "log_schema_version",
                format!("unsupported version {}, expected {LOG_SCHEMA_VERSION}", self.log_schema_version),
            ));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::config("duration_s", "must be > 0"));
        }
        if self.output.log_file.is_empty() || self.output.report_file.is_empty() {
            return Err(Error::config("output", "file names must be non-empty"));
        }
        self.vehicle.validate().map_err(|e| at("vehicle", e))?;
        self.autopilot.validate().map_err(|e| at("autopilot", e))?;
        self.mission.build().map_err(|e| at("mission", e))?;
        self.noise.validate().map_err(|e| at("noise", e))?;
        self.metrics.validate().map_err(|e| at("metrics", e))?;
        self.noise
            .oversample(self.autopilot.inner_rate_hz)
            .map_err(|e| at("noise", e))?;
        if self.autopilot.inner_dt() > crate::vehicle::MAX_STEP {
            return Err(Error::config(
                "autopilot.inner_rate_hz",
                "inner loop also sets the integration step and must be at least 200 Hz",
            ));
        }
        if self.autopilot.limits.max_thrust > self.vehicle.max_total_thrust() {
            return Err(Error::config(
                "autopilot.limits.max_thrust",
                "exceeds the vehicle's total rotor thrust",
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml_string()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}
