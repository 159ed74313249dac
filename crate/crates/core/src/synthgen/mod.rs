//! Seeded synthetic traffic for device fleets.
//!
//! Every device follows a profile of flow types (remote domains, ports,
//! packet-count, size and timing distributions, daily rates). Background
//! flows appear in every regime; interactive flows scale with the activity
//! pattern. Drift compounds a per-day factor on the size, timing and count
//! parameters and periodically renames a device's own domain.
//!
//! Rows are produced by generating flow records and featurizing them, so
//! they satisfy the same invariants as extracted traffic. A packet-level
//! mode emits the packets instead and cuts them with the flow assembler.

mod config;
mod cross;
mod generate;
mod profile;

pub use config::{ConfigError, EnvConfig, FleetPreset, CONFIG_VERSION};
pub use cross::{gen_cross_env_pair, CrossEnvPair, CROSS_ENV_DAYS};
pub use generate::{
    device_labels, gen_environment, gen_environment_packets, gen_environment_with, gen_flows, gen_packets, gen_rows,
    vocab_for, ActivityPattern, EnvironmentSpec,
};
pub use profile::{
    default_fleet, device_from_archetype, leave_one_out_fleet, full_scale_fleet, twin_device, unique_device,
    DeviceProfile, DriftParams, FleetOptions, FlowProfile, LogNormalParams, LooFleet, SrcPort, CATEGORY_NAMES,
};

/// Default fleet over 21 days with 2 % daily drift and weekly domain
/// rotation.
pub fn drift_preset(seed: u64) -> EnvironmentSpec {
    let opts = FleetOptions { drift_rate: 0.02, rotate_every: 7, ..FleetOptions::default() };
    EnvironmentSpec {
        name: "drift".into(),
        devices: default_fleet(seed, &opts),
        pattern: ActivityPattern::Light,
        n_days: 21,
        seed,
    }
}
