use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::generate::{ActivityPattern, EnvironmentSpec};
use super::profile::{default_fleet, leave_one_out_fleet, full_scale_fleet, FleetOptions};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config version {0} is not supported (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("config: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FleetPreset {
    /// 10 devices, 6 categories.
    Default,
    /// 43 devices, 6 categories.
    FullScale,
    /// 12 devices with a twin pair and one unique-profile device.
    LeaveOneOut,
}

/// Declarative environment description.
///
/// ```toml
/// version = 1
/// name = "drift"
/// fleet = "default"        # default | full-scale | leave-one-out
/// pattern = "light"        # idle | light | medium | heavy
/// n_days = 21
/// seed = 7
/// fleet_seed = 7           # optional, defaults to seed
/// drift_rate = 0.02        # optional, per-day geometric rate
/// rotate_every = 7         # optional, 0 disables domain rotation
/// jitter = 0.15            # optional, per-device spread
/// rate_scale = 1.0         # optional, multiplies flow rates
/// packet_level = false     # optional, route packets through flow assembly
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub version: u32,
    pub name: String,
    pub fleet: FleetPreset,
    pub pattern: ActivityPattern,
    pub n_days: u32,
    pub seed: u64,
    #[serde(default)]
    pub fleet_seed: Option<u64>,
    #[serde(default)]
    pub drift_rate: f64,
    #[serde(default)]
    pub rotate_every: u32,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "one")]
    pub rate_scale: f64,
    #[serde(default)]
    pub packet_level: bool,
}

fn default_jitter() -> f64 {
    FleetOptions::default().jitter
}

fn one() -> f64 {
    1.0
}

impl EnvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: EnvConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        if !(1..=366).contains(&self.n_days) {
            return Err(ConfigError::Invalid("n_days must be in 1..=366"));
        }
        if !(0.0..=1.0).contains(&self.drift_rate) {
            return Err(ConfigError::Invalid("drift_rate must be in [0, 1]"));
        }
        if !(0.0..=2.0).contains(&self.jitter) {
            return Err(ConfigError::Invalid("jitter must be in [0, 2]"));
        }
        if !(self.rate_scale > 0.0 && self.rate_scale <= 100.0) {
            return Err(ConfigError::Invalid("rate_scale must be in (0, 100]"));
        }
        Ok(())
    }

    pub fn fleet_options(&self) -> FleetOptions {
        FleetOptions {
            jitter: self.jitter,
            drift_rate: self.drift_rate,
            rotate_every: self.rotate_every,
            rate_scale: self.rate_scale,
        }
    }

    pub fn to_spec(&self) -> EnvironmentSpec {
        let fleet_seed = self.fleet_seed.unwrap_or(self.seed);
        let opts = self.fleet_options();
        let devices = match self.fleet {
            FleetPreset::Default => default_fleet(fleet_seed, &opts),
            FleetPreset::FullScale => full_scale_fleet(fleet_seed, &opts),
            FleetPreset::LeaveOneOut => leave_one_out_fleet(fleet_seed, &opts).devices,
        };
        EnvironmentSpec { name: self.name.clone(), devices, pattern: self.pattern, n_days: self.n_days, seed: self.seed }
    }
}
