use rand::Rng;

use super::generate::{ActivityPattern, EnvironmentSpec};
use super::profile::{default_fleet, fresh_interactive, FleetOptions, FlowProfile};
use crate::seed;

/// Three households for update experiments.
///
/// * `a` ("large"): the reference fleet; its interactive flows are busier
///   variants of the background traffic.
/// * `b` ("small"): the same devices with unrelated interactive behavior.
/// * `c` ("control"): the same device ids, with perturbed background
///   parameters and interactive behavior of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossEnvPair {
    pub a: EnvironmentSpec,
    pub b: EnvironmentSpec,
    pub c: EnvironmentSpec,
}

pub const CROSS_ENV_DAYS: u32 = 7;

fn perturbed(f: &FlowProfile, rng: &mut rand_chacha::ChaCha8Rng) -> FlowProfile {
    let mut k = |lo: f64, hi: f64| {
        let v: f64 = rng.random_range(lo..hi);
        if rng.random_bool(0.5) {
            v
        } else {
            1.0 / v
        }
    };
    let mut out = f.clone();
    out.pkts_mean = 1.0 + (f.pkts_mean - 1.0) * k(1.3, 1.8) + 0.1;
    out.out_fraction = (f.out_fraction * k(1.2, 1.5)).clamp(0.05, 0.95);
    out.size_out.mean *= k(1.3, 1.8);
    out.size_out.sigma *= k(1.1, 1.3);
    out.size_in.mean *= k(1.3, 1.8);
    out.size_in.sigma *= k(1.1, 1.3);
    out.gap.mean *= k(1.3, 1.8);
    out.gap.sigma *= k(1.1, 1.3);
    out.rate *= k(1.05, 1.2);
    out
}

pub fn gen_cross_env_pair(base_seed: u64) -> CrossEnvPair {
    let fleet = default_fleet(seed::derive(base_seed, &[0xa]), &FleetOptions::default());
    let a = EnvironmentSpec {
        name: "A".into(),
        devices: fleet.clone(),
        pattern: ActivityPattern::Heavy,
        n_days: CROSS_ENV_DAYS,
        seed: seed::derive(base_seed, &[0xa, 1]),
    };
    let mut rng_b = seed::rng(seed::derive(base_seed, &[0xb]));
    let b_devices = fleet
        .iter()
        .map(|d| {
            let mut d = d.clone();
            d.interactive = fresh_interactive(&mut rng_b, &format!("d{}", d.device_id), "hhb", 1.0);
            d
        })
        .collect();
    let b = EnvironmentSpec {
        name: "B".into(),
        devices: b_devices,
        pattern: ActivityPattern::Heavy,
        n_days: CROSS_ENV_DAYS,
        seed: seed::derive(base_seed, &[0xb, 1]),
    };
    let mut rng_c = seed::rng(seed::derive(base_seed, &[0xc]));
    let c_devices = fleet
        .iter()
        .map(|d| {
            let mut d = d.clone();
            d.background = d.background.iter().map(|f| perturbed(f, &mut rng_c)).collect();
            d.interactive = fresh_interactive(&mut rng_c, &format!("d{}", d.device_id), "hhc", 1.0);
            d
        })
        .collect();
    let c = EnvironmentSpec {
        name: "C".into(),
        devices: c_devices,
        pattern: ActivityPattern::Heavy,
        n_days: CROSS_ENV_DAYS,
        seed: seed::derive(base_seed, &[0xc, 1]),
    };
    CrossEnvPair { a, b, c }
}
