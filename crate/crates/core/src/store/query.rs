//! Read-only aggregates over a [`StoreState`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{DomainStat, Scope, StoreState};
use super::StoreError;
use crate::filter::Label;
use crate::name::Fqdn;
use crate::time::{TimeWindow, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainCount {
    pub fqdn: Fqdn,
    pub access_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSlice {
    pub device_key: String,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlockedRatio {
    pub unblocked_trackers: u64,
    pub blocked_trackers: u64,
    pub non_trackers: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlluvialLayer {
    Device,
    Sld,
    Organization,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlluvialNode {
    pub id: String,
    pub layer: AlluvialLayer,
    pub name: String,
    /// Total access count flowing through the node.
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlluvialEdge {
    pub from: String,
    pub to: String,
    pub weight: u64,
}

/// Device -> SLD -> organization -> classification flow.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlluvialGraph {
    pub nodes: Vec<AlluvialNode>,
    pub edges: Vec<AlluvialEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint<T> {
    pub window_start: Timestamp,
    pub value: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    #[default]
    LastContacted,
    AccessCount,
    Fqdn,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    Asc,
    Desc,
}

impl SortKey {
    /// Newest, most contacted and blocked rows first; names alphabetically.
    pub fn default_order(self) -> SortOrder {
        match self {
            SortKey::Fqdn => SortOrder::Asc,
            _ => SortOrder::Desc,
        }
    }
}

pub fn top_domains(state: &StoreState, k: usize, label: Label, scope: &Scope) -> Result<Vec<DomainCount>, StoreError> {
    if k == 0 {
        return Err(StoreError::InvalidArgument("k must be at least 1".into()));
    }
    let mut totals: BTreeMap<&Fqdn, u64> = BTreeMap::new();
    for row in state.rows().filter(|r| r.label == label && scope.includes(&r.device_key)) {
        *totals.entry(&row.fqdn).or_default() += row.access_count;
    }
    let mut v: Vec<_> = totals.into_iter().collect();
    // BTreeMap order already breaks ties by name; the sort is stable
    v.sort_by_key(|e| std::cmp::Reverse(e.1));
    Ok(v.into_iter().take(k).map(|(f, c)| DomainCount { fqdn: f.clone(), access_count: c }).collect())
}

pub fn device_domain_pie(state: &StoreState, scope: &Scope) -> Vec<DeviceSlice> {
    state
        .domains
        .iter()
        .filter(|(d, rows)| scope.includes(d) && !rows.is_empty())
        .map(|(d, rows)| DeviceSlice { device_key: d.clone(), total: rows.values().map(|r| r.access_count).sum() })
        .collect()
}

pub fn blocked_ratio(state: &StoreState, device_key: &str) -> Result<BlockedRatio, StoreError> {
    if !state.devices.contains_key(device_key) {
        return Err(StoreError::UnknownDevice(device_key.to_owned()));
    }
    let mut r = BlockedRatio::default();
    for row in state.device_rows(device_key) {
        match (row.label, row.blocked) {
            (Label::Tracker, false) => r.unblocked_trackers += 1,
            (Label::Tracker, true) => r.blocked_trackers += 1,
            (Label::NonTracker, _) => r.non_trackers += 1,
        }
    }
    Ok(r)
}

pub fn alluvial(state: &StoreState, scope: &Scope) -> AlluvialGraph {
    let mut nodes: BTreeMap<(AlluvialLayer, String), u64> = BTreeMap::new();
    let mut edges: BTreeMap<(String, String), u64> = BTreeMap::new();
    let id = |layer: AlluvialLayer, name: &str| {
        let prefix = match layer {
            AlluvialLayer::Device => "device",
            AlluvialLayer::Sld => "sld",
            AlluvialLayer::Organization => "org",
            AlluvialLayer::Classification => "class",
        };
        format!("{prefix}:{name}")
    };
    for row in state.rows().filter(|r| scope.includes(&r.device_key)) {
        let path = [
            (AlluvialLayer::Device, row.device_key.as_str()),
            (AlluvialLayer::Sld, row.sld.as_str()),
            (AlluvialLayer::Organization, row.organization.as_str()),
            (AlluvialLayer::Classification, row.label.as_str()),
        ];
        for (layer, name) in path {
            *nodes.entry((layer, name.to_owned())).or_default() += row.access_count;
        }
        for w in path.windows(2) {
            *edges.entry((id(w[0].0, w[0].1), id(w[1].0, w[1].1))).or_default() += row.access_count;
        }
    }
    AlluvialGraph {
        nodes: nodes
            .into_iter()
            .map(|((layer, name), weight)| AlluvialNode { id: id(layer, &name), layer, name, weight })
            .collect(),
        edges: edges.into_iter().map(|((from, to), weight)| AlluvialEdge { from, to, weight }).collect(),
    }
}

pub fn dns_timeseries(
    state: &StoreState,
    device_key: &str,
    window: TimeWindow,
    bucket_width_secs: u32,
) -> Result<Vec<SeriesPoint<u64>>, StoreError> {
    if bucket_width_secs == 0 {
        return Err(StoreError::InvalidArgument("bucket width must be positive".into()));
    }
    if !state.devices.contains_key(device_key) {
        return Err(StoreError::UnknownDevice(device_key.to_owned()));
    }
    let mut series: BTreeMap<Timestamp, u64> = window.bucket_starts(bucket_width_secs).map(|s| (s, 0)).collect();
    for ts in state.dns_events.get(device_key).into_iter().flatten() {
        if ts.as_micros() >= window.start.align_down(bucket_width_secs).as_micros() && *ts < window.end {
            *series.entry(ts.align_down(bucket_width_secs)).or_default() += 1;
        }
    }
    Ok(series.into_iter().map(|(window_start, value)| SeriesPoint { window_start, value }).collect())
}

pub fn kbps(bytes: u64, width_secs: u32) -> f64 {
    bytes as f64 * 8.0 / 1000.0 / f64::from(width_secs)
}

/// Outbound kilobits per second per bucket; the window start is aligned down to the
/// store's bucket width.
pub fn outgoing_traffic_series(state: &StoreState, scope: &Scope, window: TimeWindow) -> Vec<SeriesPoint<f64>> {
    let width = state.bucket_width_secs;
    let mut bytes: BTreeMap<Timestamp, u64> = window.bucket_starts(width).map(|s| (s, 0)).collect();
    for (device, buckets) in &state.buckets {
        if !scope.includes(device) {
            continue;
        }
        for (start, b) in buckets {
            if let Some(slot) = bytes.get_mut(start) {
                *slot += b;
            }
        }
    }
    bytes.into_iter().map(|(window_start, b)| SeriesPoint { window_start, value: kbps(b, width) }).collect()
}

fn compare(a: &DomainStat, b: &DomainStat, key: SortKey, order: SortOrder) -> std::cmp::Ordering {
    let primary = match key {
        SortKey::LastContacted => a.last_contacted.cmp(&b.last_contacted),
        SortKey::AccessCount => a.access_count.cmp(&b.access_count),
        SortKey::Fqdn => a.fqdn.cmp(&b.fqdn),
        SortKey::Blocked => a.blocked.cmp(&b.blocked),
    };
    let primary = match order {
        SortOrder::Asc => primary,
        SortOrder::Desc => primary.reverse(),
    };
    primary.then_with(|| a.fqdn.cmp(&b.fqdn))
}

pub fn device_domain_list(
    state: &StoreState,
    device_key: &str,
    label: Option<Label>,
    key: SortKey,
    order: Option<SortOrder>,
) -> Result<Vec<DomainStat>, StoreError> {
    if !state.devices.contains_key(device_key) {
        return Err(StoreError::UnknownDevice(device_key.to_owned()));
    }
    let order = order.unwrap_or(key.default_order());
    let mut rows: Vec<DomainStat> =
        state.device_rows(device_key).filter(|r| label.is_none_or(|l| r.label == l)).cloned().collect();
    rows.sort_by(|a, b| compare(a, b, key, order));
    Ok(rows)
}

/// The `n` most recently contacted domains in scope.
pub fn recent(state: &StoreState, scope: &Scope, n: usize) -> Vec<DomainStat> {
    let mut rows: Vec<&DomainStat> = state.rows().filter(|r| scope.includes(&r.device_key)).collect();
    rows.sort_by(|a, b| {
        b.last_contacted
            .cmp(&a.last_contacted)
            .then_with(|| a.fqdn.cmp(&b.fqdn))
            .then_with(|| a.device_key.cmp(&b.device_key))
    });
    rows.into_iter().take(n).cloned().collect()
}
