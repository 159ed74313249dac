use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::FlowError;

/// Reduces a domain name to its last two labels, lowercased.
///
/// This is the naive rule: public suffixes such as `co.uk` are not special
/// cased, so `a.example.co.uk` becomes `co.uk`.
pub fn sld(domain: &str) -> Result<String, FlowError> {
    let trimmed = domain.trim().trim_end_matches('.');
    if trimmed.is_empty() {
        return Err(FlowError::EmptyDomain);
    }
    let lower = trimmed.to_ascii_lowercase();
    let labels: Vec<&str> = lower.rsplitn(3, '.').collect();
    Ok(if labels.len() <= 2 {
        lower
    } else {
        format!("{}.{}", labels[1], labels[0])
    })
}

/// Last-writer-wins map from IP address to the most recently observed name.
#[derive(Debug, Clone, Default)]
pub struct DnsTable {
    by_ip: HashMap<String, String>,
}

impl DnsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ip: impl Into<String>, domain: impl Into<String>) {
        self.by_ip.insert(ip.into(), domain.into());
    }

    pub fn resolve(&self, ip: &str) -> Option<&str> {
        self.by_ip.get(ip).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_ip.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_ip.is_empty()
    }
}

/// Dense integer codes for second-level domains. Code 0 means absent or
/// unseen.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabWire", into = "VocabWire")]
pub struct DomainVocab {
    names: Vec<String>,
    codes: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabWire {
    domains: Vec<String>,
}

impl From<VocabWire> for DomainVocab {
    fn from(w: VocabWire) -> Self {
        let mut v = DomainVocab::new();
        for d in w.domains {
            v.insert(&d);
        }
        v
    }
}

impl From<DomainVocab> for VocabWire {
    fn from(v: DomainVocab) -> Self {
        VocabWire { domains: v.names }
    }
}

impl DomainVocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the code for `domain`, assigning the next free one if new.
    pub fn insert(&mut self, domain: &str) -> u32 {
        if let Some(&c) = self.codes.get(domain) {
            return c;
        }
        self.names.push(domain.to_string());
        let code = self.names.len() as u32;
        self.codes.insert(domain.to_string(), code);
        code
    }

    pub fn code(&self, domain: &str) -> u32 {
        self.codes.get(domain).copied().unwrap_or(0)
    }

    pub fn name(&self, code: u32) -> Option<&str> {
        code.checked_sub(1)
            .and_then(|i| self.names.get(i as usize))
            .map(String::as_str)
    }

    /// Number of assigned codes, excluding the reserved 0.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}
