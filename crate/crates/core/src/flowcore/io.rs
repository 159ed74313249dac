//! JSONL adapters: packet streams in, flow records in, feature rows out.

use std::collections::BTreeSet;
use std::io::BufRead;

use thiserror::Error;

use super::{featurize, sld, DeviceLabels, DomainVocab, FeatureVector, FlowConfig, FlowError};
use super::{FlowRecord, FlowTable, PacketRecord};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("record {index}: {source}")]
    Flow {
        index: usize,
        #[source]
        source: FlowError,
    },
}

pub fn read_packets<R: BufRead>(reader: R) -> impl Iterator<Item = Result<PacketRecord, JsonlError>> {
    jsonl::read_lines(reader)
}

/// Runs a packet stream through a [`FlowTable`] and returns all records,
/// including the final flush.
pub fn assemble<I>(packets: I, cfg: FlowConfig, registry: Option<DeviceLabels>) -> Result<Vec<FlowRecord>, ExtractError>
where
    I: IntoIterator<Item = Result<PacketRecord, JsonlError>>,
{
    let mut table = FlowTable::new(cfg, registry);
    let mut out = Vec::new();
    for (index, p) in packets.into_iter().enumerate() {
        let p = p?;
        out.extend(table.advance(&p).map_err(|source| ExtractError::Flow { index: index + 1, source })?);
    }
    out.extend(table.flush());
    Ok(out)
}

/// Reads pre-extracted flow records, checking each against the cut rules.
pub fn read_flows<R: BufRead>(reader: R, cfg: &FlowConfig) -> Result<Vec<FlowRecord>, ExtractError> {
    let mut out = Vec::new();
    for (index, rec) in jsonl::read_lines::<FlowRecord, _>(reader).enumerate() {
        let rec = rec?;
        rec.validate(cfg.max_packets, cfg.active_timeout)
            .map_err(|source| ExtractError::Flow { index: index + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

/// Builds a vocabulary over the second-level domains of `flows`, assigning
/// codes in lexicographic order so the result does not depend on record
/// order.
pub fn build_vocab<'a>(flows: impl IntoIterator<Item = &'a FlowRecord>) -> DomainVocab {
    let names: BTreeSet<String> = flows
        .into_iter()
        .filter_map(|f| f.remote_domain.as_deref())
        .filter_map(|d| sld(d).ok())
        .collect();
    let mut vocab = DomainVocab::new();
    for n in &names {
        vocab.insert(n);
    }
    vocab
}

pub fn featurize_all(flows: &[FlowRecord], vocab: &DomainVocab) -> Vec<FeatureVector> {
    flows.iter().map(|f| featurize(f, vocab)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PACKETS: &str = r#"
{"timestamp":0.0,"device_mac":"m1","src_ip":"8.8.8.8","dst_ip":"10.0.0.5","src_port":53,"dst_port":5353,"protocol":17,"size":90,"direction":"inbound","dns":{"name":"x.cloud.example.net","addrs":["5.6.7.8"]}}
{"timestamp":0.2,"device_mac":"m1","src_ip":"10.0.0.5","dst_ip":"5.6.7.8","src_port":41000,"dst_port":443,"protocol":6,"size":120,"direction":"outbound"}
{"timestamp":0.4,"device_mac":"m1","src_ip":"5.6.7.8","dst_ip":"10.0.0.5","src_port":443,"dst_port":41000,"protocol":6,"size":1400,"direction":"inbound"}
"#;

    #[test]
    fn packets_to_features() {
        let flows = assemble(read_packets(PACKETS.as_bytes()), FlowConfig::default(), None).unwrap();
        assert_eq!(flows.len(), 2);
        let vocab = build_vocab(&flows);
        assert_eq!(vocab.code("example.net"), 1);
        let rows = featurize_all(&flows, &vocab);
        let https = rows.iter().find(|r| r.features[1] == 443.0).unwrap();
        assert_eq!(https.features[2], 120.0);
        assert_eq!(https.features[3], 1400.0);
        assert_eq!(https.features[18], 1.0);
    }

    #[test]
    fn malformed_packet_line_is_reported() {
        let bad = "{\"timestamp\": 1}\n";
        let err = assemble(read_packets(bad.as_bytes()), FlowConfig::default(), None).unwrap_err();
        assert!(err.to_string().starts_with("line 1"), "{err}");
    }

    #[test]
    fn flow_records_round_trip_and_validate() {
        let flows = assemble(read_packets(PACKETS.as_bytes()), FlowConfig::default(), None).unwrap();
        let mut buf = Vec::new();
        for f in &flows {
            jsonl::write_line(&mut buf, f).unwrap();
        }
        let back = read_flows(buf.as_slice(), &FlowConfig::default()).unwrap();
        assert_eq!(back, flows);

        let mut long = flows[0].clone();
        long.end_time = long.start_time + 31.0;
        let mut buf = Vec::new();
        jsonl::write_line(&mut buf, &long).unwrap();
        assert!(read_flows(buf.as_slice(), &FlowConfig::default()).is_err());
    }
}
