//! Self-identifying JSON report.

use std::collections::BTreeMap;

use loo_adapt_core::{LooReport, RunConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub tool_version: String,
    pub config_echo: RunConfig,
    /// `sha256:<hex>` of the dataset file bytes.
    pub dataset_fingerprint: String,
    /// `sha256:<hex>` of the draws file bytes.
    pub draws_fingerprint: String,
    pub report: LooReport,
    /// Wall-clock milliseconds per stage. The only non-deterministic field.
    pub timings: BTreeMap<String, u64>,
}

impl ReportEnvelope {
    pub fn new(config: RunConfig, dataset_fingerprint: String, draws_fingerprint: String, report: LooReport) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_echo: config,
            dataset_fingerprint,
            draws_fingerprint,
            report,
            timings: BTreeMap::new(),
        }
    }

    /// Pretty JSON with `timings` emptied, for reproducibility checks.
    pub fn canonical_json(&self) -> serde_json::Result<String> {
        let mut copy = self.clone();
        copy.timings.clear();
        serde_json::to_string_pretty(&copy)
    }
}

/// `sha256:` followed by the lowercase hex digest of `bytes`.
pub fn fingerprint(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(7 + 64);
    s.push_str("sha256:");
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
