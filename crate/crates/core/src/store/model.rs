use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::filter::Label;
use crate::name::Fqdn;
use crate::time::Timestamp;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BUCKET_WIDTH_SECS: u32 = 5;
pub const DEFAULT_RAW_RETENTION_SECS: u64 = 7 * 24 * 3600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device_key: String,
    pub display_name: String,
    pub first_seen: Timestamp,
    pub last_seen: Timestamp,
    pub addresses: BTreeSet<IpAddr>,
}

/// Per (device, domain) rollup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainStat {
    pub device_key: String,
    pub fqdn: Fqdn,
    pub sld: Fqdn,
    pub organization: String,
    pub label: Label,
    pub matched_rule: Option<Fqdn>,
    pub access_count: u64,
    pub last_contacted: Timestamp,
    pub blocked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficBucket {
    pub window_start: Timestamp,
    pub width_secs: u32,
    pub outbound_bytes: u64,
}

/// Flows whose destination could not be named.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedTotals {
    pub flows: u64,
    pub bytes: u64,
}

/// Everything the store holds; serialized as-is for export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreState {
    pub schema_version: u32,
    pub bucket_width_secs: u32,
    pub raw_retention_secs: u64,
    pub ruleset_version: u64,
    pub blocklist_version: u64,
    pub latest_event: Timestamp,
    pub devices: BTreeMap<String, DeviceRecord>,
    /// device key -> fqdn -> stat
    pub domains: BTreeMap<String, BTreeMap<Fqdn, DomainStat>>,
    /// device key -> bucket start (µs) -> outbound bytes
    pub buckets: BTreeMap<String, BTreeMap<Timestamp, u64>>,
    pub unresolved: BTreeMap<String, UnresolvedTotals>,
    /// Raw DNS answer timestamps per device, pruned to the retention period.
    pub dns_events: BTreeMap<String, Vec<Timestamp>>,
}

impl StoreState {
    pub fn new(bucket_width_secs: u32) -> Self {
        StoreState {
            schema_version: SCHEMA_VERSION,
            bucket_width_secs: bucket_width_secs.max(1),
            raw_retention_secs: DEFAULT_RAW_RETENTION_SECS,
            ruleset_version: 0,
            blocklist_version: 0,
            latest_event: Timestamp::ZERO,
            devices: BTreeMap::new(),
            domains: BTreeMap::new(),
            buckets: BTreeMap::new(),
            unresolved: BTreeMap::new(),
            dns_events: BTreeMap::new(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &DomainStat> {
        self.domains.values().flat_map(BTreeMap::values)
    }

    pub fn device_rows<'a>(&'a self, device_key: &str) -> impl Iterator<Item = &'a DomainStat> {
        self.domains.get(device_key).into_iter().flat_map(BTreeMap::values)
    }
}

/// Which devices an aggregate covers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Scope {
    #[default]
    All,
    Device(String),
}

impl Scope {
    pub fn includes(&self, device_key: &str) -> bool {
        match self {
            Scope::All => true,
            Scope::Device(d) => d == device_key,
        }
    }
}
