use super::{sld, DomainVocab, FeatureVector, FlowRecord, N_FEATURES};

/// Population moments of a series.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub var: f64,
    /// Fisher skewness `m3 / m2^1.5`.
    pub skew: f64,
    /// Excess kurtosis `m4 / m2^2 - 3`.
    pub kurtosis: f64,
}

/// Computes population (divide by `n`) moments.
///
/// Empty input yields all zeros. A series whose spread is indistinguishable
/// from rounding noise around its mean is treated as constant: variance,
/// skew and kurtosis are then 0 so features stay finite.
pub fn moments(values: &[f64]) -> Moments {
    if values.is_empty() {
        return Moments::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = m2.sqrt();
    if m2 == 0.0 || std <= 1e-12 * mean.abs() {
        return Moments {
            mean,
            ..Moments::default()
        };
    }
    Moments {
        mean,
        std,
        var: std * std,
        skew: m3 / (m2 * std),
        kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

/// Reduces a flow record to its 19 features.
///
/// `domain` is the vocabulary code of the remote domain's second-level name,
/// or 0 when the domain is absent, malformed or not in `vocab`.
pub fn featurize(flow: &FlowRecord, vocab: &DomainVocab) -> FeatureVector {
    let sizes: Vec<f64> = flow.pkt_sizes.iter().map(|&s| s as f64).collect();
    let ipt = moments(&flow.pkt_gaps);
    let b = moments(&sizes);
    let domain = flow
        .remote_domain
        .as_deref()
        .and_then(|d| sld(d).ok())
        .map_or(0, |d| vocab.code(&d));
    let features: [f64; N_FEATURES] = [
        flow.key.src_port as f64,
        flow.key.dst_port as f64,
        flow.bytes_out as f64,
        flow.bytes_in as f64,
        flow.pkts_out as f64,
        flow.pkts_in as f64,
        ipt.mean,
        ipt.std,
        ipt.var,
        ipt.skew,
        ipt.kurtosis,
        b.mean,
        b.std,
        b.var,
        b.skew,
        b.kurtosis,
        flow.duration().max(0.0),
        flow.key.protocol as f64,
        domain as f64,
    ];
    FeatureVector {
        features,
        device_id: flow.device_id,
        category_id: flow.category_id,
        day_index: flow.day_index,
    }
}
