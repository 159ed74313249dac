use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use super::profile::{DeviceProfile, FlowProfile, LogNormalParams, SrcPort};
use crate::flowcore::io::assemble;
use crate::flowcore::{
    featurize, sld, DeviceLabels, Direction, DnsAnswer, DomainVocab, FlowConfig, FlowKey, FlowRecord,
    PacketRecord,
};
use crate::harness::LabeledDataset;
use crate::{seed, FeatureVector};

const DAY: f64 = 86_400.0;
const MAX_PACKETS: u64 = 400;
const MAX_GAP: f64 = 9.5;
const MAX_SPAN: f64 = 30.0;
const RESOLVER: &str = "10.0.255.1";

/// How much users interact with the devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityPattern {
    Idle,
    Light,
    Medium,
    Heavy,
}

impl ActivityPattern {
    pub const ALL: [ActivityPattern; 4] =
        [ActivityPattern::Idle, ActivityPattern::Light, ActivityPattern::Medium, ActivityPattern::Heavy];

    /// Multiplier on interactive flow rates.
    pub fn interactive_scale(self) -> f64 {
        match self {
            ActivityPattern::Idle => 0.0,
            ActivityPattern::Light => 1.0,
            ActivityPattern::Medium => 2.0,
            ActivityPattern::Heavy => 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub name: String,
    pub devices: Vec<DeviceProfile>,
    pub pattern: ActivityPattern,
    pub n_days: u32,
    pub seed: u64,
}

impl EnvironmentSpec {
    pub fn with_pattern(&self, pattern: ActivityPattern) -> Self {
        EnvironmentSpec { pattern, ..self.clone() }
    }

    /// Expected flows of one device on one day.
    pub fn expected_flows(&self, device: &DeviceProfile) -> f64 {
        device.background.iter().map(|f| f.rate).sum::<f64>()
            + self.pattern.interactive_scale() * device.interactive.iter().map(|f| f.rate).sum::<f64>()
    }
}

/// Replaces the second-level label of `domain` with a rotated variant.
fn rotate_domain(domain: &str, r: u32) -> String {
    match domain.rsplit_once('.') {
        Some((rest, tld)) => format!("{rest}-r{r}.{tld}"),
        None => format!("{domain}-r{r}"),
    }
}

/// Domain pool of `flow` on `day`: the device's own (last) domain of every
/// multi-domain pool is renamed at each rotation.
fn domains_on(device: &DeviceProfile, flow: &FlowProfile, day: u32) -> Vec<String> {
    let r = device.drift.rotations(day);
    let mut pool = flow.domains.clone();
    if r > 0 && pool.len() > 1 {
        let last = pool.len() - 1;
        pool[last] = rotate_domain(&pool[last], r);
    }
    pool
}

/// Vocabulary over every domain the environments can emit during their
/// days, sorted by name.
pub fn vocab_for(envs: &[&EnvironmentSpec]) -> DomainVocab {
    let mut names = BTreeSet::new();
    for env in envs {
        for d in &env.devices {
            for f in d.all_flows() {
                for day in 1..=env.n_days {
                    for dom in domains_on(d, f, day) {
                        if let Ok(s) = sld(&dom) {
                            names.insert(s);
                        }
                    }
                }
            }
        }
    }
    let mut vocab = DomainVocab::new();
    for n in &names {
        vocab.insert(n);
    }
    vocab
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Stable documentation-range address for a remote host.
fn remote_ip(domain: &str) -> String {
    let h = fnv(domain);
    format!("198.51.{}.{}", h % 256, (h >> 8) % 254 + 1)
}

fn sample_lognormal(rng: &mut ChaCha8Rng, p: LogNormalParams) -> f64 {
    LogNormal::new(p.mu(), p.sigma).expect("finite parameters").sample(rng)
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).expect("positive rate").sample(rng) as u64
    }
}

/// One packet of a synthetic flow, relative to its start.
struct SynthPacket {
    offset: f64,
    size: u32,
    outbound: bool,
}

fn synth_packets(rng: &mut ChaCha8Rng, f: &FlowProfile) -> Vec<SynthPacket> {
    let n = (1 + poisson(rng, f.pkts_mean - 1.0)).min(MAX_PACKETS);
    let mut out = Vec::with_capacity(n as usize);
    let mut t = 0.0;
    for i in 0..n {
        if i > 0 {
            let gap = sample_lognormal(rng, f.gap).clamp(1e-4, MAX_GAP);
            if t + gap > MAX_SPAN {
                break;
            }
            t += gap;
        }
        let outbound = i == 0 || rng.random_bool(f.out_fraction);
        let size = sample_lognormal(rng, if outbound { f.size_out } else { f.size_in }).round().clamp(40.0, 1500.0);
        out.push(SynthPacket { offset: t, size: size as u32, outbound });
    }
    out
}

/// A synthetic flow with its packets, before featurization.
struct SynthFlow {
    record: FlowRecord,
    packets: Vec<SynthPacket>,
}

fn synth_flow(rng: &mut ChaCha8Rng, device: &DeviceProfile, f: &FlowProfile, pool: &[String], day: u32) -> SynthFlow {
    let domain = pool[rng.random_range(0..pool.len())].clone();
    let dst_port = f.dst_ports[rng.random_range(0..f.dst_ports.len())];
    let src_port = match f.src_port {
        SrcPort::Ephemeral => rng.random_range(49152..=65535),
        SrcPort::Fixed(p) => p,
    };
    let start = (day - 1) as f64 * DAY + rng.random_range(60.0..DAY - 120.0);
    let packets = synth_packets(rng, f);
    let (mut bytes_out, mut bytes_in, mut pkts_out, mut pkts_in) = (0, 0, 0, 0);
    for p in &packets {
        if p.outbound {
            bytes_out += p.size as u64;
            pkts_out += 1;
        } else {
            bytes_in += p.size as u64;
            pkts_in += 1;
        }
    }
    let head = &packets[..packets.len().min(50)];
    let record = FlowRecord {
        key: FlowKey {
            device_mac: device.mac.clone(),
            src_ip: device.ip.clone(),
            src_port,
            dst_ip: remote_ip(&domain),
            dst_port,
            protocol: f.protocol,
        },
        start_time: start,
        end_time: start + packets.last().map_or(0.0, |p| p.offset),
        bytes_out,
        bytes_in,
        pkts_out,
        pkts_in,
        pkt_sizes: head.iter().map(|p| p.size).collect(),
        pkt_gaps: head.windows(2).map(|w| w[1].offset - w[0].offset).collect(),
        remote_domain: Some(domain),
        device_id: device.device_id,
        category_id: device.category_id,
        day_index: day,
    };
    SynthFlow { record, packets }
}

/// All flows of one day, ordered by start time then device.
fn day_flows(spec: &EnvironmentSpec, day: u32) -> Vec<SynthFlow> {
    let scale = spec.pattern.interactive_scale();
    let mut flows = Vec::new();
    for device in &spec.devices {
        let mut rng = seed::rng(seed::derive(spec.seed, &[device.device_id as u64, day as u64]));
        let factors = device.drift.factors(day);
        let kinds = device.background.iter().map(|f| (f, 1.0)).chain(device.interactive.iter().map(|f| (f, scale)));
        for (f, mult) in kinds {
            let f = f.drifted(&factors);
            let pool = domains_on(device, &f, day);
            for _ in 0..poisson(&mut rng, f.rate * mult) {
                flows.push(synth_flow(&mut rng, device, &f, &pool, day));
            }
        }
    }
    flows.sort_by(|a, b| {
        a.record.start_time.total_cmp(&b.record.start_time).then(a.record.device_id.cmp(&b.record.device_id))
    });
    flows
}

/// Flow records of the environment, day by day.
pub fn gen_flows(spec: &EnvironmentSpec) -> Vec<FlowRecord> {
    (1..=spec.n_days).flat_map(|day| day_flows(spec, day).into_iter().map(|f| f.record)).collect()
}

/// Feature rows of the environment using `vocab` for domain codes.
pub fn gen_rows(spec: &EnvironmentSpec, vocab: &DomainVocab) -> Vec<FeatureVector> {
    gen_flows(spec).iter().map(|f| featurize(f, vocab)).collect()
}

/// Labeled rows for every device and day of `spec`.
pub fn gen_environment(spec: &EnvironmentSpec) -> LabeledDataset {
    gen_environment_with(spec, &vocab_for(&[spec]))
}

/// As [`gen_environment`] with a vocabulary shared across environments.
pub fn gen_environment_with(spec: &EnvironmentSpec, vocab: &DomainVocab) -> LabeledDataset {
    LabeledDataset::with_days(gen_rows(spec, vocab), spec.n_days).expect("generated rows are valid")
}

/// Packet stream of the environment, including a DNS answer ahead of each
/// flow, in timestamp order.
pub fn gen_packets(spec: &EnvironmentSpec) -> Vec<PacketRecord> {
    let mut out = Vec::new();
    for day in 1..=spec.n_days {
        let mut day_packets = Vec::new();
        for flow in day_flows(spec, day) {
            let r = &flow.record;
            let domain = r.remote_domain.clone().expect("synthetic flows have domains");
            day_packets.push(PacketRecord {
                timestamp: r.start_time - 0.5,
                device_mac: r.key.device_mac.clone(),
                src_ip: RESOLVER.to_string(),
                dst_ip: r.key.src_ip.clone(),
                src_port: 53,
                dst_port: 5353,
                protocol: 17,
                size: 120,
                direction: Direction::Inbound,
                dns: Some(DnsAnswer { name: domain, addrs: vec![r.key.dst_ip.clone()] }),
            });
            for p in &flow.packets {
                let (src_ip, dst_ip, src_port, dst_port, direction) = if p.outbound {
                    (&r.key.src_ip, &r.key.dst_ip, r.key.src_port, r.key.dst_port, Direction::Outbound)
                } else {
                    (&r.key.dst_ip, &r.key.src_ip, r.key.dst_port, r.key.src_port, Direction::Inbound)
                };
                day_packets.push(PacketRecord {
                    timestamp: r.start_time + p.offset,
                    device_mac: r.key.device_mac.clone(),
                    src_ip: src_ip.clone(),
                    dst_ip: dst_ip.clone(),
                    src_port,
                    dst_port,
                    protocol: r.key.protocol,
                    size: p.size,
                    direction,
                    dns: None,
                });
            }
        }
        day_packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        out.extend(day_packets);
    }
    out
}

/// MAC registry of the environment's devices.
pub fn device_labels(spec: &EnvironmentSpec) -> DeviceLabels {
    let mut labels = DeviceLabels::default();
    for d in &spec.devices {
        labels.insert(d.mac.clone(), d.device_id, d.category_id);
    }
    labels
}

/// Packet-level mode: synthesizes packets and cuts them into flows with the
/// regular flow assembly, day 1 starting at time 0.
pub fn gen_environment_packets(spec: &EnvironmentSpec) -> Result<LabeledDataset, crate::flowcore::io::ExtractError> {
    let cfg = FlowConfig { day_origin: Some(0.0), ..FlowConfig::default() };
    let flows = assemble(gen_packets(spec).into_iter().map(Ok), cfg, Some(device_labels(spec)))?;
    let vocab = vocab_for(&[spec]);
    let rows = flows.iter().map(|f| featurize(f, &vocab)).collect();
    Ok(LabeledDataset::with_days(rows, spec.n_days).expect("assembled rows are valid"))
}
