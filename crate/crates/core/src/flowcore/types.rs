use serde::{Deserialize, Serialize};

use super::FlowError;

/// Number of numeric feature slots per flow.
pub const N_FEATURES: usize = 19;

/// Feature names in slot order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "src_port",
    "dest_port",
    "bytes_out",
    "bytes_in",
    "pkts_out",
    "pkts_in",
    "ipt_mean",
    "ipt_std",
    "ipt_var",
    "ipt_skew",
    "ipt_kurtosis",
    "b_mean",
    "b_std",
    "b_var",
    "b_skew",
    "b_kurtosis",
    "duration",
    "protocol",
    "domain",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Sent by the device.
    Outbound,
    /// Received by the device.
    Inbound,
}

/// A DNS response carried by a packet: `name` resolved to `addrs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnsAnswer {
    pub name: String,
    pub addrs: Vec<String>,
}

/// One observed packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketRecord {
    pub timestamp: f64,
    pub device_mac: String,
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
    pub size: u32,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dns: Option<DnsAnswer>,
}

/// Flow key, oriented from the device's point of view: `src` is the local
/// endpoint and `dst` the remote one regardless of packet direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub device_mac: String,
    pub src_ip: String,
    pub src_port: u16,
    pub dst_ip: String,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FlowKey {
    pub fn of_packet(p: &PacketRecord) -> Self {
        match p.direction {
            Direction::Outbound => FlowKey {
                device_mac: p.device_mac.clone(),
                src_ip: p.src_ip.clone(),
                src_port: p.src_port,
                dst_ip: p.dst_ip.clone(),
                dst_port: p.dst_port,
                protocol: p.protocol,
            },
            Direction::Inbound => FlowKey {
                device_mac: p.device_mac.clone(),
                src_ip: p.dst_ip.clone(),
                src_port: p.dst_port,
                dst_ip: p.src_ip.clone(),
                dst_port: p.src_port,
                protocol: p.protocol,
            },
        }
    }
}

/// One cut flow record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    #[serde(flatten)]
    pub key: FlowKey,
    pub start_time: f64,
    pub end_time: f64,
    pub bytes_out: u64,
    pub bytes_in: u64,
    pub pkts_out: u64,
    pub pkts_in: u64,
    /// Sizes of the first (up to 50) packets.
    pub pkt_sizes: Vec<u32>,
    /// Gaps between consecutive packets of `pkt_sizes`, in seconds.
    pub pkt_gaps: Vec<f64>,
    #[serde(default)]
    pub remote_domain: Option<String>,
    pub device_id: u32,
    pub category_id: u32,
    pub day_index: u32,
}

impl FlowRecord {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    /// Checks the structural invariants a record read from outside must hold.
    pub fn validate(&self, max_packets: usize, max_span: f64) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidRecord(m.to_string()));
        if !self.start_time.is_finite() || !self.end_time.is_finite() {
            return bad("non-finite timestamps");
        }
        let span = self.duration();
        if span < 0.0 {
            return bad("end_time precedes start_time");
        }
        if span > max_span + 1e-9 {
            return bad("record span exceeds the active timeout");
        }
        if self.pkts_out + self.pkts_in == 0 {
            return bad("record holds no packets");
        }
        if self.pkt_sizes.len() > max_packets {
            return bad("too many packet sizes");
        }
        if self.pkt_gaps.len() != self.pkt_sizes.len().saturating_sub(1) {
            return bad("pkt_gaps length must be one less than pkt_sizes");
        }
        if self.pkt_gaps.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("negative or non-finite packet gap");
        }
        if self.day_index == 0 {
            return bad("day_index starts at 1");
        }
        Ok(())
    }
}

/// The 19 flow features plus labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FeatureRow", into = "FeatureRow")]
pub struct FeatureVector {
    pub features: [f64; N_FEATURES],
    pub device_id: u32,
    pub category_id: u32,
    pub day_index: u32,
}

impl FeatureVector {
    pub fn is_finite(&self) -> bool {
        self.features.iter().all(|v| v.is_finite())
    }
}

// Wire shape of a feature vector: named keys in slot order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureRow {
    src_port: f64,
    dest_port: f64,
    bytes_out: f64,
    bytes_in: f64,
    pkts_out: f64,
    pkts_in: f64,
    ipt_mean: f64,
    ipt_std: f64,
    ipt_var: f64,
    ipt_skew: f64,
    ipt_kurtosis: f64,
    b_mean: f64,
    b_std: f64,
    b_var: f64,
    b_skew: f64,
    b_kurtosis: f64,
    duration: f64,
    protocol: f64,
    domain: f64,
    device_id: u32,
    category_id: u32,
    day_index: u32,
}

impl From<FeatureRow> for FeatureVector {
    fn from(r: FeatureRow) -> Self {
        FeatureVector {
            features: [
                r.src_port,
                r.dest_port,
                r.bytes_out,
                r.bytes_in,
                r.pkts_out,
                r.pkts_in,
                r.ipt_mean,
                r.ipt_std,
                r.ipt_var,
                r.ipt_skew,
                r.ipt_kurtosis,
                r.b_mean,
                r.b_std,
                r.b_var,
                r.b_skew,
                r.b_kurtosis,
                r.duration,
                r.protocol,
                r.domain,
            ],
            device_id: r.device_id,
            category_id: r.category_id,
            day_index: r.day_index,
        }
    }
}

impl From<FeatureVector> for FeatureRow {
    fn from(v: FeatureVector) -> Self {
        let f = v.features;
        FeatureRow {
            src_port: f[0],
            dest_port: f[1],
            bytes_out: f[2],
            bytes_in: f[3],
            pkts_out: f[4],
            pkts_in: f[5],
            ipt_mean: f[6],
            ipt_std: f[7],
            ipt_var: f[8],
            ipt_skew: f[9],
            ipt_kurtosis: f[10],
            b_mean: f[11],
            b_std: f[12],
            b_var: f[13],
            b_skew: f[14],
            b_kurtosis: f[15],
            duration: f[16],
            protocol: f[17],
            domain: f[18],
            device_id: v.device_id,
            category_id: v.category_id,
            day_index: v.day_index,
        }
    }
}
