//! Campaign provenance shared by every stage.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::mr::{MrSpec, Value};
use crate::tdg::FuzzMode;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const PAIRING_POLICY: &str = "every function runs on every datum";
pub const CONSTANT_POLICY: &str = "one shared k for all relations that need one";
pub const SELECTION_POLICY: &str = "lowest corpus ids first, distinct pairs";

/// Parameters of one campaign, filled in stage by stage. Artifacts are
/// referenced by SHA-256 so a later stage can tell when an input changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignManifest {
    pub tool_version: String,
    pub seed: u64,
    pub prng: String,
    pub mode: Option<FuzzMode>,
    pub count: Option<u64>,
    pub domain_min: Option<Value>,
    pub domain_max: Option<Value>,
    pub k: Option<Value>,
    pub constant_policy: String,
    pub pairing_policy: String,
    pub mr_set_hash: Option<String>,
    pub mrs: Option<Vec<MrSpec>>,
    pub sut: Option<String>,
    pub functions: Option<Vec<String>>,
    pub atypical_threshold: Option<String>,
    pub sample_size: Option<usize>,
    pub min_support: Option<String>,
    pub min_confidence: Option<String>,
    pub encoder: Option<String>,
    pub selection_policy: String,
    /// Cell that blocked the campaign, if the tester reported a fault.
    pub blocked: Option<String>,
    pub artifacts: BTreeMap<String, String>,
}

impl CampaignManifest {
    pub fn new(seed: u64) -> Self {
        CampaignManifest {
            tool_version: TOOL_VERSION.to_string(),
            seed,
            prng: crate::tdg::PRNG_ALGORITHM.to_string(),
            constant_policy: CONSTANT_POLICY.to_string(),
            pairing_policy: PAIRING_POLICY.to_string(),
            selection_policy: SELECTION_POLICY.to_string(),
            ..Default::default()
        }
    }

    /// Digest of the configuration, ignoring artifact hashes.
    pub fn hash(&self) -> String {
        let mut config = self.clone();
        config.artifacts.clear();
        let json = serde_json::to_vec(&config).expect("manifest serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn record_artifact(&mut self, name: &str, bytes: &[u8]) {
        self.artifacts.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
