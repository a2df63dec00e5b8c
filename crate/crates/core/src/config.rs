//! Scenario configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::PoAConfig;
use crate::contracts::MapBounds;
use crate::error::{Error, Result};
use crate::sim::{FleetConfig, TopologyConfig, WorldConfig, DEFAULT_ARRIVAL_RATE, DEFAULT_EPOCH, DEFAULT_TIME_SCALE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// One-way delivery delay of the loopback transport.
    pub latency_ms: u64,
    /// Virtual clock step of the in-process harness.
    pub tick_ms: u64,
    pub host: String,
    /// Live mode: bootnode on `base_port`, node p2p, node RPC and managers
    /// on consecutive blocks above it.
    pub base_port: u16,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            latency_ms: 5,
            tick_ms: 10,
            host: "127.0.0.1".into(),
            base_port: 30_300,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Wall seconds of simulation; simulated time is this times `time_scale`.
    pub duration_s: f64,
    pub time_scale: f64,
    pub sealers: usize,
    /// Shipment requests per simulated second.
    pub arrival_rate: f64,
    pub handling_s: f64,
    pub epoch: String,
    pub map: TopologyConfig,
    pub fleet: FleetConfig,
    pub chain: PoAConfig,
    pub network: NetworkConfig,
    pub data_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 42,
            duration_s: 100.0,
            time_scale: DEFAULT_TIME_SCALE,
            sealers: 3,
            arrival_rate: DEFAULT_ARRIVAL_RATE,
            handling_s: 30.0,
            epoch: DEFAULT_EPOCH.into(),
            map: TopologyConfig::default(),
            fleet: FleetConfig::default(),
            chain: PoAConfig::default(),
            network: NetworkConfig::default(),
            data_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        ScenarioConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidConfig("duration_s must be non-negative".into()));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::InvalidConfig("time_scale must be positive".into()));
        }
        if self.sealers == 0 {
            return Err(Error::InvalidConfig("at least one sealer is required".into()));
        }
        if self.network.tick_ms == 0 {
            return Err(Error::InvalidConfig("tick_ms must be positive".into()));
        }
        self.chain.validate()
    }

    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            topology: self.map.clone(),
            fleet: self.fleet.clone(),
            arrival_rate: self.arrival_rate,
            handling_s: self.handling_s,
            epoch: self.epoch.clone(),
            seed: self.seed,
        }
    }

    pub fn bounds(&self) -> MapBounds {
        MapBounds {
            width: self.map.width,
            height: self.map.height,
        }
    }

    pub fn duration_ms(&self) -> u64 {
        (self.duration_s * 1000.0).round() as u64
    }

    /// Simulated seconds per harness tick.
    pub fn sim_dt(&self) -> f64 {
        self.network.tick_ms as f64 / 1000.0 * self.time_scale
    }
}
