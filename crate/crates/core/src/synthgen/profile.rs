use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

pub const CATEGORY_NAMES: [&str; 6] = ["surveillance", "media", "audio", "hub", "appliance", "home-automation"];

/// Local port choice of a flow type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SrcPort {
    /// Uniform over 49152..=65535.
    Ephemeral,
    Fixed(u16),
}

/// Log-normal distribution given by its mean and log-space sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mean: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    pub fn mu(&self) -> f64 {
        self.mean.ln() - 0.5 * self.sigma * self.sigma
    }

    fn scaled(self, f: f64) -> Self {
        LogNormalParams { mean: self.mean * f, sigma: self.sigma }
    }
}

/// One kind of flow a device produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowProfile {
    /// Remote hosts, chosen uniformly per flow.
    pub domains: Vec<String>,
    pub dst_ports: Vec<u16>,
    pub src_port: SrcPort,
    pub protocol: u8,
    /// Mean packets per flow (at least one packet is always sent).
    pub pkts_mean: f64,
    /// Probability that a packet after the first is outbound.
    pub out_fraction: f64,
    pub size_out: LogNormalParams,
    pub size_in: LogNormalParams,
    pub gap: LogNormalParams,
    /// Expected flows per day.
    pub rate: f64,
}

impl FlowProfile {
    /// Applies the multiplicative day factors of a drift step.
    pub(crate) fn drifted(&self, f: &DriftFactors) -> Self {
        FlowProfile {
            pkts_mean: 1.0 + (self.pkts_mean - 1.0) * f.pkts,
            size_out: self.size_out.scaled(f.size_out),
            size_in: self.size_in.scaled(f.size_in),
            gap: self.gap.scaled(f.gap),
            ..self.clone()
        }
    }

    /// Numeric parameters, for comparing profiles.
    pub fn parameter_vector(&self) -> Vec<f64> {
        vec![
            self.pkts_mean,
            self.out_fraction,
            self.size_out.mean,
            self.size_out.sigma,
            self.size_in.mean,
            self.size_in.sigma,
            self.gap.mean,
            self.gap.sigma,
            self.rate,
        ]
    }
}

/// Day-indexed perturbation of a device's behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    /// Per-day geometric rate applied to packet sizes, gaps and packet
    /// counts; each device drifts each quantity up or down.
    pub rate: f64,
    /// Signs (+1 / -1) for size out, size in, gap and packet count.
    pub directions: [f64; 4],
    /// Every this many days one of the device's domains is replaced; 0
    /// disables rotation.
    pub rotate_every: u32,
    /// Day offset staggering rotations across devices.
    pub rotate_phase: u32,
}

impl DriftParams {
    pub fn none() -> Self {
        DriftParams { rate: 0.0, directions: [1.0; 4], rotate_every: 0, rotate_phase: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DriftFactors {
    size_out: f64,
    size_in: f64,
    gap: f64,
    pkts: f64,
}

impl DriftParams {
    pub(crate) fn factors(&self, day: u32) -> DriftFactors {
        let t = day.saturating_sub(1) as f64;
        let f = |i: usize| (1.0 + self.rate).powf(self.directions[i] * t);
        DriftFactors { size_out: f(0), size_in: f(1), gap: f(2), pkts: f(3) }
    }

    /// Number of rotations that have happened by `day`.
    pub(crate) fn rotations(&self, day: u32) -> u32 {
        if self.rotate_every == 0 {
            0
        } else {
            (day + self.rotate_phase) / self.rotate_every
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: u32,
    pub category_id: u32,
    pub name: String,
    pub mac: String,
    pub ip: String,
    /// Flows present in every regime.
    pub background: Vec<FlowProfile>,
    /// Flows caused by user interaction; scaled by the activity pattern.
    pub interactive: Vec<FlowProfile>,
    pub drift: DriftParams,
}

impl DeviceProfile {
    pub fn all_flows(&self) -> impl Iterator<Item = &FlowProfile> {
        self.background.iter().chain(&self.interactive)
    }
}

/// Knobs shared by the fleet presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetOptions {
    /// Log-space spread of per-device deviations from the category
    /// archetype.
    pub jitter: f64,
    pub drift_rate: f64,
    pub rotate_every: u32,
    /// Multiplies every flow rate.
    pub rate_scale: f64,
}

impl Default for FleetOptions {
    fn default() -> Self {
        FleetOptions { jitter: 0.15, drift_rate: 0.0, rotate_every: 0, rate_scale: 1.0 }
    }
}

struct Template {
    stem: &'static str,
    dst_ports: &'static [u16],
    protocol: u8,
    fixed_src: Option<u16>,
    pkts: f64,
    out_fraction: f64,
    size_out: f64,
    size_in: f64,
    gap: f64,
    rate: f64,
}

const fn t(
    stem: &'static str,
    dst_ports: &'static [u16],
    protocol: u8,
    pkts: f64,
    out_fraction: f64,
    size_out: f64,
    size_in: f64,
    gap: f64,
    rate: f64,
) -> Template {
    Template { stem, dst_ports, protocol, fixed_src: None, pkts, out_fraction, size_out, size_in, gap, rate }
}

/// Background flow templates of each category.
fn category_templates(category: u32) -> Vec<Template> {
    match category {
        0 => vec![
            t("camcloud", &[443], 6, 30.0, 0.8, 900.0, 90.0, 0.05, 30.0),
            t("p2pcam", &[10001, 32100], 17, 6.0, 0.5, 180.0, 160.0, 0.8, 12.0),
        ],
        1 => vec![
            t("streamcdn", &[443, 80], 6, 40.0, 0.25, 110.0, 1200.0, 0.03, 24.0),
            t("tvapps", &[443], 6, 10.0, 0.5, 300.0, 500.0, 0.3, 14.0),
        ],
        2 => vec![
            t("voiceapi", &[443], 6, 14.0, 0.45, 350.0, 420.0, 0.2, 26.0),
            t("speakermq", &[8883, 443], 6, 5.0, 0.5, 210.0, 180.0, 2.0, 14.0),
        ],
        3 => vec![
            t("hubmqtt", &[8883, 1883], 6, 4.0, 0.55, 130.0, 150.0, 1.5, 34.0),
            t("hubsync", &[443], 6, 8.0, 0.5, 260.0, 330.0, 0.6, 10.0),
        ],
        4 => vec![
            t("kitchenapi", &[2081, 443], 6, 3.0, 0.6, 85.0, 95.0, 2.5, 18.0),
            t("appliot", &[5683], 17, 2.0, 0.5, 70.0, 75.0, 3.0, 12.0),
        ],
        _ => vec![
            t("homeauto", &[443, 8443], 6, 6.0, 0.5, 220.0, 260.0, 0.7, 22.0),
            t("plugctl", &[9999], 17, 3.0, 0.5, 160.0, 190.0, 1.2, 16.0),
        ],
    }
}

/// Flow types every device shares, such as time synchronization.
fn common_templates() -> Vec<Template> {
    vec![Template { fixed_src: Some(123), ..t("ntppool", &[123], 17, 2.0, 0.5, 76.0, 76.0, 0.05, 6.0) }]
}

fn jittered(rng: &mut ChaCha8Rng, v: f64, jitter: f64) -> f64 {
    v * (jitter * rng.random_range(-1.0..1.0f64)).exp()
}

fn build_flow(
    rng: &mut ChaCha8Rng,
    tpl: &Template,
    domains: Vec<String>,
    jitter: f64,
    rate_scale: f64,
) -> FlowProfile {
    FlowProfile {
        domains,
        dst_ports: tpl.dst_ports.to_vec(),
        src_port: tpl.fixed_src.map_or(SrcPort::Ephemeral, SrcPort::Fixed),
        protocol: tpl.protocol,
        pkts_mean: 1.0 + (jittered(rng, tpl.pkts, jitter) - 1.0).max(0.5),
        out_fraction: (tpl.out_fraction + jitter * rng.random_range(-0.2..0.2)).clamp(0.05, 0.95),
        size_out: LogNormalParams { mean: jittered(rng, tpl.size_out, jitter), sigma: 0.25 },
        size_in: LogNormalParams { mean: jittered(rng, tpl.size_in, jitter), sigma: 0.25 },
        gap: LogNormalParams { mean: jittered(rng, tpl.gap, jitter), sigma: 0.6 },
        rate: jittered(rng, tpl.rate, jitter) * rate_scale,
    }
}

/// Interactive flows built as busier variants of the background.
pub(crate) fn interactive_from_background(background: &[FlowProfile]) -> Vec<FlowProfile> {
    background
        .iter()
        .map(|f| FlowProfile {
            pkts_mean: f.pkts_mean * 1.5,
            size_out: f.size_out.scaled(1.1),
            size_in: f.size_in.scaled(1.1),
            rate: f.rate * 0.5,
            ..f.clone()
        })
        .collect()
}

/// Interactive flows with their own domains, ports and size/timing
/// parameters drawn from `rng`. `tag` keeps domain names distinct between
/// households.
pub(crate) fn fresh_interactive(rng: &mut ChaCha8Rng, device_key: &str, tag: &str, rate_scale: f64) -> Vec<FlowProfile> {
    (0..2)
        .map(|k| {
            let proto = if rng.random_bool(0.3) { 17 } else { 6 };
            FlowProfile {
                domains: vec![format!("app{k}.{tag}-{device_key}.net")],
                dst_ports: vec![rng.random_range(1024..60000)],
                src_port: SrcPort::Ephemeral,
                protocol: proto,
                pkts_mean: rng.random_range(3.0..40.0),
                out_fraction: rng.random_range(0.1..0.9),
                size_out: LogNormalParams { mean: rng.random_range(60.0..1400.0), sigma: rng.random_range(0.15..0.45) },
                size_in: LogNormalParams { mean: rng.random_range(60.0..1400.0), sigma: rng.random_range(0.15..0.45) },
                gap: LogNormalParams { mean: rng.random_range(0.02..2.5), sigma: rng.random_range(0.3..0.9) },
                rate: rng.random_range(15.0..30.0) * rate_scale,
            }
        })
        .collect()
}

fn mac_of(device_id: u32) -> String {
    format!("02:00:00:00:{:02x}:{:02x}", device_id >> 8 & 0xff, device_id & 0xff)
}

fn ip_of(device_id: u32) -> String {
    format!("10.0.{}.{}", device_id / 250, device_id % 250 + 2)
}

/// A device of `category` built from the category archetype with per-device
/// jitter. Devices of one category share the category's vendor domains and
/// each has one domain of its own.
pub fn device_from_archetype(device_id: u32, category: u32, fleet_seed: u64, opts: &FleetOptions) -> DeviceProfile {
    let mut rng = seed::rng(seed::derive(fleet_seed, &[0xde71ce, device_id as u64]));
    let name = format!("{}-{device_id}", CATEGORY_NAMES[category as usize % 6]);
    let own = format!("dev{device_id}-{}.io", CATEGORY_NAMES[category as usize % 6]);
    let mut background: Vec<FlowProfile> = category_templates(category)
        .iter()
        .map(|tpl| {
            let vendor = format!("api.{}.com", tpl.stem);
            build_flow(&mut rng, tpl, vec![vendor, format!("{}.{own}", tpl.stem)], opts.jitter, opts.rate_scale)
        })
        .collect();
    background.extend(
        common_templates()
            .iter()
            .map(|tpl| build_flow(&mut rng, tpl, vec![format!("pool.{}.org", tpl.stem)], opts.jitter, opts.rate_scale)),
    );
    let interactive = interactive_from_background(&background[..background.len() - 1]);
    let directions = [0; 4].map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    DeviceProfile {
        device_id,
        category_id: category,
        name,
        mac: mac_of(device_id),
        ip: ip_of(device_id),
        background,
        interactive,
        drift: DriftParams {
            rate: opts.drift_rate,
            directions,
            rotate_every: opts.rotate_every,
            rotate_phase: if opts.rotate_every == 0 { 0 } else { rng.random_range(0..opts.rotate_every) },
        },
    }
}

/// A device whose behavior follows no category archetype: its own domains,
/// ports and parameters.
pub fn unique_device(device_id: u32, category: u32, fleet_seed: u64, opts: &FleetOptions) -> DeviceProfile {
    let mut rng = seed::rng(seed::derive(fleet_seed, &[0x0dd, device_id as u64]));
    let key = format!("odd{device_id}");
    let background = fresh_interactive(&mut rng, &key, "bg", opts.rate_scale)
        .into_iter()
        .map(|mut f| {
            f.rate *= 1.5;
            f
        })
        .collect::<Vec<_>>();
    DeviceProfile {
        device_id,
        category_id: category,
        name: format!("unique-{device_id}"),
        mac: mac_of(device_id),
        ip: ip_of(device_id),
        interactive: interactive_from_background(&background),
        background,
        drift: DriftParams { rate: opts.drift_rate, ..DriftParams::none() },
    }
}

/// Copy of `of` under a new id, MAC and address.
pub fn twin_device(of: &DeviceProfile, device_id: u32) -> DeviceProfile {
    DeviceProfile {
        device_id,
        name: format!("{}-twin", of.name),
        mac: mac_of(device_id),
        ip: ip_of(device_id),
        ..of.clone()
    }
}

fn fleet(categories: &[u32], seed: u64, opts: &FleetOptions) -> Vec<DeviceProfile> {
    categories.iter().enumerate().map(|(i, &c)| device_from_archetype(i as u32, c, seed, opts)).collect()
}

/// 10 devices over the 6 categories.
pub fn default_fleet(seed: u64, opts: &FleetOptions) -> Vec<DeviceProfile> {
    fleet(&[0, 0, 1, 1, 2, 2, 3, 3, 4, 5], seed, opts)
}

/// 43 devices over the 6 categories.
pub fn full_scale_fleet(seed: u64, opts: &FleetOptions) -> Vec<DeviceProfile> {
    let counts = [9, 4, 6, 7, 5, 12];
    let cats: Vec<u32> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c as u32, n)).collect();
    fleet(&cats, seed, opts)
}

/// Fleet for leave-one-device-out runs: two devices per category, where
/// device 1 is an exact behavioral twin of device 0 and the last device has
/// a profile unlike any category.
#[derive(Debug, Clone, PartialEq)]
pub struct LooFleet {
    pub devices: Vec<DeviceProfile>,
    pub twin: u32,
    pub unique: u32,
}

pub fn leave_one_out_fleet(seed: u64, opts: &FleetOptions) -> LooFleet {
    let mut devices = fleet(&[0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5], seed, opts);
    devices[1] = twin_device(&devices[0], 1);
    let last = devices.len() - 1;
    devices[last] = unique_device(last as u32, 5, seed, opts);
    LooFleet { devices, twin: 1, unique: last as u32 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fleets_have_expected_shape() {
        let o = FleetOptions::default();
        assert_eq!(default_fleet(1, &o).len(), 10);
        let big = full_scale_fleet(1, &o);
        assert_eq!(big.len(), 43);
        let mut cats: Vec<u32> = big.iter().map(|d| d.category_id).collect();
        cats.dedup();
        assert_eq!(cats, vec![0, 1, 2, 3, 4, 5]);
        let loo = leave_one_out_fleet(1, &o);
        assert_eq!(loo.devices[0].background, loo.devices[1].background);
        assert_ne!(loo.devices[0].mac, loo.devices[1].mac);
        assert_eq!(loo.devices[loo.unique as usize].category_id, 5);
    }

    #[test]
    fn profiles_are_seeded() {
        let o = FleetOptions::default();
        assert_eq!(default_fleet(4, &o), default_fleet(4, &o));
        assert_ne!(default_fleet(4, &o), default_fleet(5, &o));
        for d in default_fleet(4, &o) {
            for f in d.all_flows() {
                assert!(f.parameter_vector().iter().all(|v| v.is_finite() && *v >= 0.0));
            }
        }
    }

    #[test]
    fn drift_factors_compound() {
        let d = DriftParams { rate: 0.1, directions: [1.0, -1.0, 1.0, 1.0], rotate_every: 7, rotate_phase: 2 };
        let f = d.factors(3);
        assert!((f.size_out - 1.21).abs() < 1e-12);
        assert!((f.size_in - 1.0 / 1.21).abs() < 1e-12);
        assert_eq!(d.factors(1), DriftParams::none().factors(9));
        assert_eq!((d.rotations(4), d.rotations(5), d.rotations(12)), (0, 1, 2));
    }
}
