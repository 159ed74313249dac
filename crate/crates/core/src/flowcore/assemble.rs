use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{DnsTable, FlowError, FlowKey, FlowRecord, PacketRecord, Direction};

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Flow cutting parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// A key idle for longer than this is cut at its last packet.
    pub inactive_timeout: f64,
    /// A record whose span would exceed this is cut and a new one started.
    pub active_timeout: f64,
    /// Packets whose sizes and gaps are retained per record.
    pub max_packets: usize,
    /// How far a timestamp may step backwards before it is rejected.
    pub reorder_tolerance: f64,
    /// Timestamp of the start of day 1. Defaults to the first packet seen.
    pub day_origin: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            inactive_timeout: 10.0,
            active_timeout: 30.0,
            max_packets: 50,
            reorder_tolerance: 0.0,
            day_origin: None,
        }
    }
}

/// Maps device MAC addresses to `(device_id, category_id)` labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceLabels {
    pub devices: HashMap<String, DeviceLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceLabel {
    pub device_id: u32,
    pub category_id: u32,
}

impl DeviceLabels {
    pub fn insert(&mut self, mac: impl Into<String>, device_id: u32, category_id: u32) {
        self.devices.insert(mac.into(), DeviceLabel { device_id, category_id });
    }
}

#[derive(Debug, Clone)]
struct FlowState {
    start_time: f64,
    last_time: f64,
    bytes_out: u64,
    bytes_in: u64,
    pkts_out: u64,
    pkts_in: u64,
    pkt_sizes: Vec<u32>,
    pkt_gaps: Vec<f64>,
    remote_domain: Option<String>,
    label: DeviceLabel,
}

/// Single-writer flow assembler for one capture.
///
/// Inactivity is detected lazily: when a packet arrives for a key, or during
/// a sweep over all keys triggered at most once per second of capture time.
/// [`FlowTable::flush`] emits whatever remains.
#[derive(Debug)]
pub struct FlowTable {
    cfg: FlowConfig,
    registry: Option<DeviceLabels>,
    auto_labels: HashMap<String, DeviceLabel>,
    dns: DnsTable,
    flows: HashMap<FlowKey, FlowState>,
    high_water: Option<f64>,
    origin: Option<f64>,
    next_sweep: f64,
}

impl FlowTable {
    /// Without a registry, devices are numbered in order of first
    /// appearance and all share category 0.
    pub fn new(cfg: FlowConfig, registry: Option<DeviceLabels>) -> Self {
        let origin = cfg.day_origin;
        FlowTable {
            cfg,
            registry,
            auto_labels: HashMap::new(),
            dns: DnsTable::new(),
            flows: HashMap::new(),
            high_water: None,
            origin,
            next_sweep: f64::NEG_INFINITY,
        }
    }

    pub fn dns(&self) -> &DnsTable {
        &self.dns
    }

    pub fn open_flows(&self) -> usize {
        self.flows.len()
    }

    /// Ingests one packet and returns every record that became complete.
    pub fn advance(&mut self, packet: &PacketRecord) -> Result<Vec<FlowRecord>, FlowError> {
        if !packet.timestamp.is_finite() {
            return Err(FlowError::BadTimestamp);
        }
        let mut now = packet.timestamp;
        if let Some(hw) = self.high_water {
            if now < hw - self.cfg.reorder_tolerance {
                return Err(FlowError::OutOfOrder {
                    timestamp: now,
                    high_water: hw,
                    tolerance: self.cfg.reorder_tolerance,
                });
            }
            now = now.max(hw);
        }
        let label = self.label_for(&packet.device_mac)?;
        self.high_water = Some(now);
        self.origin.get_or_insert(now);

        if let Some(answer) = &packet.dns {
            for ip in &answer.addrs {
                self.dns.insert(ip.clone(), answer.name.clone());
            }
        }

        let mut done = Vec::new();
        let key = FlowKey::of_packet(packet);
        if let Some(st) = self.flows.get(&key) {
            let idle = now - st.last_time > self.cfg.inactive_timeout;
            let too_long = now - st.start_time > self.cfg.active_timeout;
            if idle || too_long {
                let st = self.flows.remove(&key).expect("present");
                done.push(self.finish(key.clone(), st));
            }
        }
        let remote = self.dns.resolve(&key.dst_ip).map(str::to_string);
        let max_packets = self.cfg.max_packets;
        let st = self.flows.entry(key).or_insert_with(|| FlowState {
            start_time: now,
            last_time: now,
            bytes_out: 0,
            bytes_in: 0,
            pkts_out: 0,
            pkts_in: 0,
            pkt_sizes: Vec::new(),
            pkt_gaps: Vec::new(),
            remote_domain: None,
            label,
        });
        if st.remote_domain.is_none() {
            st.remote_domain = remote;
        }
        match packet.direction {
            Direction::Outbound => {
                st.bytes_out += packet.size as u64;
                st.pkts_out += 1;
            }
            Direction::Inbound => {
                st.bytes_in += packet.size as u64;
                st.pkts_in += 1;
            }
        }
        if st.pkt_sizes.len() < max_packets {
            if !st.pkt_sizes.is_empty() {
                st.pkt_gaps.push(now - st.last_time);
            }
            st.pkt_sizes.push(packet.size);
        }
        st.last_time = now;

        if now >= self.next_sweep {
            self.next_sweep = now + 1.0;
            done.extend(self.sweep(now));
        }
        done.sort_by(|a, b| a.start_time.total_cmp(&b.start_time).then_with(|| a.key.cmp(&b.key)));
        Ok(done)
    }

    /// Emits all open flows.
    pub fn flush(&mut self) -> Vec<FlowRecord> {
        let mut keys: Vec<FlowKey> = self.flows.keys().cloned().collect();
        keys.sort();
        let mut done: Vec<FlowRecord> = keys
            .into_iter()
            .map(|k| {
                let st = self.flows.remove(&k).expect("present");
                self.finish(k, st)
            })
            .collect();
        done.sort_by(|a, b| a.start_time.total_cmp(&b.start_time).then_with(|| a.key.cmp(&b.key)));
        done
    }

    fn sweep(&mut self, now: f64) -> Vec<FlowRecord> {
        let timeout = self.cfg.inactive_timeout;
        let mut idle: Vec<FlowKey> = self
            .flows
            .iter()
            .filter(|(_, st)| now - st.last_time > timeout)
            .map(|(k, _)| k.clone())
            .collect();
        idle.sort();
        idle.into_iter()
            .map(|k| {
                let st = self.flows.remove(&k).expect("present");
                self.finish(k, st)
            })
            .collect()
    }

    fn label_for(&mut self, mac: &str) -> Result<DeviceLabel, FlowError> {
        if let Some(reg) = &self.registry {
            return reg
                .devices
                .get(mac)
                .copied()
                .ok_or_else(|| FlowError::UnknownDevice(mac.to_string()));
        }
        let next = self.auto_labels.len() as u32;
        Ok(*self.auto_labels.entry(mac.to_string()).or_insert(DeviceLabel {
            device_id: next,
            category_id: 0,
        }))
    }

    fn finish(&self, key: FlowKey, st: FlowState) -> FlowRecord {
        let origin = self.origin.unwrap_or(st.start_time);
        let day = ((st.start_time - origin) / SECONDS_PER_DAY).floor().max(0.0) as u32 + 1;
        FlowRecord {
            key,
            start_time: st.start_time,
            end_time: st.last_time,
            bytes_out: st.bytes_out,
            bytes_in: st.bytes_in,
            pkts_out: st.pkts_out,
            pkts_in: st.pkts_in,
            pkt_sizes: st.pkt_sizes,
            pkt_gaps: st.pkt_gaps,
            remote_domain: st.remote_domain,
            device_id: st.label.device_id,
            category_id: st.label.category_id,
            day_index: day,
        }
    }
}
