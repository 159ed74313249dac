//! Flow assembly and per-flow feature extraction.
//!
//! Packets are grouped by `(device, local endpoint, remote endpoint,
//! protocol)` into flow records. A record is cut when its key has been idle
//! for more than ten seconds or has been active for more than thirty; the
//! continuing traffic starts a fresh record. Each record is then reduced to a
//! fixed 19-slot [`FeatureVector`].

mod assemble;
mod dns;
mod features;
pub mod io;
mod types;

pub use assemble::{DeviceLabels, FlowConfig, FlowTable};
pub use dns::{sld, DnsTable, DomainVocab};
pub use features::{featurize, moments, Moments};
pub use types::{
    Direction, DnsAnswer, FeatureVector, FlowKey, FlowRecord, PacketRecord, FEATURE_NAMES,
    N_FEATURES,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("packet at t={timestamp} arrived before t={high_water} (tolerance {tolerance}s)")]
    OutOfOrder {
        timestamp: f64,
        high_water: f64,
        tolerance: f64,
    },
    #[error("packet timestamp is not finite")]
    BadTimestamp,
    #[error("no label registered for device {0}")]
    UnknownDevice(String),
    #[error("empty domain name")]
    EmptyDomain,
    #[error("invalid flow record: {0}")]
    InvalidRecord(String),
}
