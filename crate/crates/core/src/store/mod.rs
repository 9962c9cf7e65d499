//! Device, domain and traffic state plus every aggregate the dashboard shows.
//!
//! One writer applies events under a write lock, so readers only ever see whole
//! events. Queries run against the in-memory state; it is checkpointed to a SQLite
//! file and exported as canonical JSON.

mod model;
pub mod query;
mod sqlite;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use thiserror::Error;

pub use model::{
    DeviceRecord, DomainStat, Scope, StoreState, TrafficBucket, UnresolvedTotals, DEFAULT_BUCKET_WIDTH_SECS,
    DEFAULT_RAW_RETENTION_SECS, SCHEMA_VERSION,
};
pub use query::{
    AlluvialEdge, AlluvialGraph, AlluvialLayer, AlluvialNode, BlockedRatio, DeviceSlice, DomainCount, SeriesPoint,
    SortKey, SortOrder,
};

use crate::filter::{Label, Labeler};
use crate::name::Fqdn;
use crate::packet::{resolve_flow_domain, DnsAnswerEvent, FlowEvent, FlowResolution, IpDomainMap};
use crate::sinkhole::BlockList;
use crate::time::{TimeWindow, Timestamp};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown device {0:?}")]
    UnknownDevice(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error("database error: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// What a flow changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowUpdate {
    pub bucket: TrafficBucket,
    pub domain: Option<DomainStat>,
}

pub struct TelemetryStore {
    state: RwLock<StoreState>,
    labeler: RwLock<Arc<Labeler>>,
    blocklist: RwLock<Arc<BlockList>>,
    display_names: RwLock<HashMap<String, String>>,
}

impl std::fmt::Debug for TelemetryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TelemetryStore").finish_non_exhaustive()
    }
}

impl TelemetryStore {
    pub fn new(labeler: Arc<Labeler>, blocklist: Arc<BlockList>, bucket_width_secs: u32) -> Self {
        let mut state = StoreState::new(bucket_width_secs);
        state.ruleset_version = labeler.version;
        state.blocklist_version = blocklist.version;
        TelemetryStore {
            state: RwLock::new(state),
            labeler: RwLock::new(labeler),
            blocklist: RwLock::new(blocklist),
            display_names: RwLock::new(HashMap::new()),
        }
    }

    pub fn set_display_names(&self, names: HashMap<String, String>) {
        let mut st = self.state.write();
        for (key, dev) in st.devices.iter_mut() {
            if let Some(n) = names.get(key) {
                dev.display_name = n.clone();
            }
        }
        *self.display_names.write() = names;
    }

    pub fn labeler(&self) -> Arc<Labeler> {
        self.labeler.read().clone()
    }

    pub fn bucket_width_secs(&self) -> u32 {
        self.state.read().bucket_width_secs
    }

    /// Runs `f` against a consistent snapshot.
    pub fn read<T>(&self, f: impl FnOnce(&StoreState) -> T) -> T {
        f(&self.state.read())
    }

    fn touch_device(&self, st: &mut StoreState, key: &str, ip: std::net::IpAddr, at: Timestamp) {
        let dev = st.devices.entry(key.to_owned()).or_insert_with(|| DeviceRecord {
            device_key: key.to_owned(),
            display_name: self.display_names.read().get(key).cloned().unwrap_or_else(|| key.to_owned()),
            first_seen: at,
            last_seen: at,
            addresses: Default::default(),
        });
        dev.first_seen = dev.first_seen.min(at);
        dev.last_seen = dev.last_seen.max(at);
        if !ip.is_unspecified() {
            dev.addresses.insert(ip);
        }
        st.latest_event = st.latest_event.max(at);
    }

    fn upsert_domain(&self, st: &mut StoreState, device: &str, fqdn: &Fqdn, at: Timestamp) -> DomainStat {
        let rows = st.domains.entry(device.to_owned()).or_default();
        let row = rows.entry(fqdn.clone()).or_insert_with(|| {
            let labels = self.labeler.read().label(fqdn);
            DomainStat {
                device_key: device.to_owned(),
                fqdn: fqdn.clone(),
                sld: labels.sld,
                organization: labels.organization,
                label: labels.classification.label,
                matched_rule: labels.classification.matched_rule,
                access_count: 0,
                last_contacted: at,
                blocked: self.blocklist.read().is_blocked(fqdn),
            }
        });
        row.access_count += 1;
        row.last_contacted = row.last_contacted.max(at);
        row.clone()
    }

    /// Counts a DNS answer as one contact of `qname` by the device.
    pub fn record_dns(&self, event: &DnsAnswerEvent) -> DomainStat {
        let mut st = self.state.write();
        self.touch_device(&mut st, &event.device_key, event.device_ip, event.timestamp);
        let retention = st.raw_retention_secs;
        let cutoff = Timestamp::from_micros(
            st.latest_event.as_micros().saturating_sub((retention as i64).saturating_mul(1_000_000)),
        );
        let raw = st.dns_events.entry(event.device_key.clone()).or_default();
        let pos = raw.partition_point(|t| *t <= event.timestamp);
        raw.insert(pos, event.timestamp);
        if raw.first().is_some_and(|t| *t < cutoff) {
            raw.retain(|t| *t >= cutoff);
        }
        self.upsert_domain(&mut st, &event.device_key, &event.qname, event.timestamp)
    }

    /// Adds the flow's bytes to its bucket and counts a contact when the
    /// destination resolved to a name.
    pub fn record_flow_resolved(&self, event: &FlowEvent, resolution: &FlowResolution) -> FlowUpdate {
        let mut st = self.state.write();
        self.touch_device(&mut st, &event.device_key, event.device_ip, event.timestamp);
        let width = st.bucket_width_secs;
        let start = event.timestamp.align_down(width);
        let slot = st.buckets.entry(event.device_key.clone()).or_default().entry(start).or_default();
        *slot += event.payload_bytes;
        let bucket = TrafficBucket { window_start: start, width_secs: width, outbound_bytes: *slot };
        let domain = match resolution {
            FlowResolution::Domain(fqdn) => Some(self.upsert_domain(&mut st, &event.device_key, fqdn, event.timestamp)),
            FlowResolution::Unresolved => {
                let u = st.unresolved.entry(event.device_key.clone()).or_default();
                u.flows += 1;
                u.bytes += event.payload_bytes;
                None
            }
        };
        FlowUpdate { bucket, domain }
    }

    pub fn record_flow(&self, event: &FlowEvent, map: &IpDomainMap) -> FlowUpdate {
        let resolution = resolve_flow_domain(event, map);
        self.record_flow_resolved(event, &resolution)
    }

    /// Installs a new ruleset and relabels every row. Counters are untouched.
    pub fn swap_labeler(&self, labeler: Arc<Labeler>) {
        let mut st = self.state.write();
        for row in st.domains.values_mut().flat_map(|m| m.values_mut()) {
            let l = labeler.label(&row.fqdn);
            row.sld = l.sld;
            row.organization = l.organization;
            row.label = l.classification.label;
            row.matched_rule = l.classification.matched_rule;
        }
        st.ruleset_version = labeler.version;
        *self.labeler.write() = labeler;
    }

    /// Refreshes `blocked` flags from a blocklist snapshot. Older versions are ignored.
    pub fn apply_blocklist(&self, blocklist: Arc<BlockList>) {
        let mut st = self.state.write();
        if blocklist.version < st.blocklist_version {
            return;
        }
        for row in st.domains.values_mut().flat_map(|m| m.values_mut()) {
            row.blocked = blocklist.is_blocked(&row.fqdn);
        }
        st.blocklist_version = blocklist.version;
        *self.blocklist.write() = blocklist;
    }

    pub fn devices(&self) -> Vec<DeviceRecord> {
        self.read(|s| s.devices.values().cloned().collect())
    }

    pub fn device(&self, key: &str) -> Option<DeviceRecord> {
        self.read(|s| s.devices.get(key).cloned())
    }

    pub fn domain_stat(&self, device: &str, fqdn: &str) -> Option<DomainStat> {
        self.read(|s| s.domains.get(device).and_then(|m| m.get(fqdn)).cloned())
    }

    pub fn buckets(&self, device: &str) -> Vec<TrafficBucket> {
        self.read(|s| {
            let width = s.bucket_width_secs;
            s.buckets
                .get(device)
                .into_iter()
                .flatten()
                .map(|(start, b)| TrafficBucket { window_start: *start, width_secs: width, outbound_bytes: *b })
                .collect()
        })
    }

    pub fn latest_event(&self) -> Timestamp {
        self.read(|s| s.latest_event)
    }

    pub fn top_domains(&self, k: usize, label: Label, scope: &Scope) -> Result<Vec<DomainCount>, StoreError> {
        self.read(|s| query::top_domains(s, k, label, scope))
    }

    pub fn device_domain_pie(&self, scope: &Scope) -> Vec<DeviceSlice> {
        self.read(|s| query::device_domain_pie(s, scope))
    }

    pub fn blocked_ratio(&self, device: &str) -> Result<BlockedRatio, StoreError> {
        self.read(|s| query::blocked_ratio(s, device))
    }

    pub fn alluvial(&self, scope: &Scope) -> AlluvialGraph {
        self.read(|s| query::alluvial(s, scope))
    }

    pub fn dns_timeseries(
        &self,
        device: &str,
        window: TimeWindow,
        bucket_width_secs: u32,
    ) -> Result<Vec<SeriesPoint<u64>>, StoreError> {
        self.read(|s| query::dns_timeseries(s, device, window, bucket_width_secs))
    }

    pub fn outgoing_traffic_series(&self, scope: &Scope, window: TimeWindow) -> Vec<SeriesPoint<f64>> {
        self.read(|s| query::outgoing_traffic_series(s, scope, window))
    }

    pub fn device_domain_list(
        &self,
        device: &str,
        label: Option<Label>,
        key: SortKey,
        order: Option<SortOrder>,
    ) -> Result<Vec<DomainStat>, StoreError> {
        self.read(|s| query::device_domain_list(s, device, label, key, order))
    }

    pub fn recent(&self, scope: &Scope, n: usize) -> Vec<DomainStat> {
        self.read(|s| query::recent(s, scope, n))
    }

    /// Canonical JSON of the full state: object keys sorted, pretty-printed.
    pub fn export_json(&self) -> Result<String, StoreError> {
        let value = self.read(|s| serde_json::to_value(s))?;
        // serde_json::Map is ordered by key without the preserve_order feature
        Ok(serde_json::to_string_pretty(&value)?)
    }

    /// Replaces the state with an export. Blocked flags and labels are kept as exported.
    pub fn import_json(&self, json: &str) -> Result<(), StoreError> {
        let state: StoreState = serde_json::from_str(json)?;
        if state.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersion(state.schema_version));
        }
        *self.state.write() = state;
        Ok(())
    }

    /// Writes the current state to the SQLite file at `path` in one transaction.
    pub fn checkpoint(&self, path: &Path) -> Result<(), StoreError> {
        let st = self.state.read().clone();
        sqlite::save(&st, path)
    }

    /// Loads state from a SQLite file; returns false if it holds none yet.
    pub fn restore(&self, path: &Path) -> Result<bool, StoreError> {
        match sqlite::load(path)? {
            Some(st) => {
                *self.state.write() = st;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Atomically replaces `path` with the current JSON export.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let json = self.export_json()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(json.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn load(&self, path: &Path) -> Result<(), StoreError> {
        self.import_json(&std::fs::read_to_string(path)?)
    }
}
