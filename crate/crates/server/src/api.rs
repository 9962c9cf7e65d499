//! JSON API under `/api` and the server-sent event stream.
//!
//! Every response is an envelope: `{"status":"ok","data":…}` or
//! `{"status":"error","error":{"code":…,"message":…}}`. Timestamps are integer
//! microseconds since the Unix epoch.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use iotlens_core::filter::Label;
use iotlens_core::sinkhole::{BlockChange, BlockListError, BlockListStore};
use iotlens_core::store::query::{self, AlluvialGraph, BlockedRatio, DeviceSlice, DomainCount, SeriesPoint};
use iotlens_core::store::{DomainStat, Scope, SortKey, SortOrder, StoreError, StoreState, TelemetryStore};
use iotlens_core::time::{TimeWindow, Timestamp};
use iotlens_core::Fqdn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::events::{EventHub, PushEvent, PushKind};

pub const OPENAPI: &str = include_str!("../schema/openapi.json");
pub const DEFAULT_WINDOW_SECS: u64 = 300;
const MAX_WINDOW_SECS: u64 = 7 * 24 * 3600;
const TOP_K: usize = 5;
const RECENT_N: usize = 3;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<TelemetryStore>,
    pub blocklist: Arc<BlockListStore>,
    pub hub: EventHub,
}

impl AppState {
    pub fn new(store: Arc<TelemetryStore>, blocklist: Arc<BlockListStore>, hub: EventHub) -> Self {
        AppState { store, blocklist, hub }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/devices", get(devices))
        .route("/api/devices/{key}", get(device_detail))
        .route("/api/devices/{key}/domains", get(device_domains))
        .route("/api/dashboard", get(dashboard))
        .route("/api/blocklist", get(blocklist))
        .route("/api/block", post(block))
        .route("/api/unblock", post(unblock))
        .route("/api/events", get(events))
        .route("/api/schema", get(schema))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_argument", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownDevice(_) => Self::new(StatusCode::NOT_FOUND, "unknown_device", e.to_string()),
            StoreError::InvalidArgument(_) => Self::bad_request(e.to_string()),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl From<BlockListError> for ApiError {
    fn from(e: BlockListError) -> Self {
        match e {
            BlockListError::InvalidDomain(..) => Self::new(StatusCode::BAD_REQUEST, "invalid_domain", e.to_string()),
            BlockListError::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "persistence", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "status": "error", "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

fn ok<T: Serialize>(data: T) -> Response {
    Json(json!({ "status": "ok", "data": data })).into_response()
}

type ApiResult = Result<Response, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub device_key: String,
    pub display_name: String,
    pub first_seen: Timestamp,
    pub last_seen: Timestamp,
    pub addresses: Vec<String>,
    pub domain_count: u64,
    pub tracker_count: u64,
    pub blocked_count: u64,
    pub access_count: u64,
    /// Most recently contacted names, newest first.
    pub recent: Vec<Fqdn>,
}

fn summarize(st: &StoreState, key: &str) -> Option<DeviceSummary> {
    let d = st.devices.get(key)?;
    let rows: Vec<&DomainStat> = st.device_rows(key).collect();
    Some(DeviceSummary {
        device_key: d.device_key.clone(),
        display_name: d.display_name.clone(),
        first_seen: d.first_seen,
        last_seen: d.last_seen,
        addresses: d.addresses.iter().map(ToString::to_string).collect(),
        domain_count: rows.len() as u64,
        tracker_count: rows.iter().filter(|r| r.label == Label::Tracker).count() as u64,
        blocked_count: rows.iter().filter(|r| r.blocked).count() as u64,
        access_count: rows.iter().map(|r| r.access_count).sum(),
        recent: query::recent(st, &Scope::Device(key.to_owned()), RECENT_N).into_iter().map(|r| r.fqdn).collect(),
    })
}

async fn devices(State(s): State<AppState>) -> ApiResult {
    let list: Vec<DeviceSummary> = s.store.read(|st| st.devices.keys().filter_map(|k| summarize(st, k)).collect());
    Ok(ok(list))
}

#[derive(Debug, Deserialize)]
struct WindowParams {
    window: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    pub start: Timestamp,
    pub end: Timestamp,
    pub bucket_width_secs: u32,
}

/// Trailing window of whole buckets ending with the bucket of the latest event.
fn trailing_window(st: &StoreState, secs: Option<u64>) -> Result<WindowInfo, ApiError> {
    let width = st.bucket_width_secs;
    let secs = secs.unwrap_or(DEFAULT_WINDOW_SECS);
    if secs == 0 || secs > MAX_WINDOW_SECS || !secs.is_multiple_of(u64::from(width)) {
        return Err(ApiError::bad_request(format!(
            "window must be a positive multiple of {width} s, at most {MAX_WINDOW_SECS} s"
        )));
    }
    let end = if st.latest_event == Timestamp::ZERO {
        Timestamp::ZERO
    } else {
        st.latest_event.align_down(width).saturating_add(Duration::from_secs(width.into()))
    };
    let start = if end == Timestamp::ZERO { end } else { end.saturating_sub(Duration::from_secs(secs)) };
    Ok(WindowInfo { start, end, bucket_width_secs: width })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDetail {
    pub device: DeviceSummary,
    pub blocked_ratio: BlockedRatio,
    pub alluvial: AlluvialGraph,
    pub window: WindowInfo,
    pub dns_series: Vec<SeriesPoint<u64>>,
    pub recent: Vec<DomainStat>,
}

async fn device_detail(State(s): State<AppState>, Path(key): Path<String>, Query(p): Query<WindowParams>) -> ApiResult {
    let detail = s.store.read(|st| -> Result<DeviceDetail, ApiError> {
        let device = summarize(st, &key).ok_or_else(|| StoreError::UnknownDevice(key.clone()))?;
        let window = trailing_window(st, p.window)?;
        let scope = Scope::Device(key.clone());
        Ok(DeviceDetail {
            device,
            blocked_ratio: query::blocked_ratio(st, &key)?,
            alluvial: query::alluvial(st, &scope),
            dns_series: query::dns_timeseries(st, &key, TimeWindow::new(window.start, window.end), window.bucket_width_secs)?,
            window,
            recent: query::recent(st, &scope, RECENT_N),
        })
    })?;
    Ok(ok(detail))
}

#[derive(Debug, Deserialize)]
struct DomainParams {
    label: Option<String>,
    sort: Option<String>,
    order: Option<String>,
}

fn parse_label(s: Option<&str>) -> Result<Option<Label>, ApiError> {
    match s {
        None | Some("") | Some("all") => Ok(None),
        Some("tracker") => Ok(Some(Label::Tracker)),
        Some("non_tracker") => Ok(Some(Label::NonTracker)),
        Some(other) => Err(ApiError::bad_request(format!("label must be tracker, non_tracker or all, not {other:?}"))),
    }
}

fn parse_sort(s: Option<&str>) -> Result<SortKey, ApiError> {
    Ok(match s {
        None | Some("") | Some("last_contacted") => SortKey::LastContacted,
        Some("access_count") => SortKey::AccessCount,
        Some("fqdn") => SortKey::Fqdn,
        Some("blocked") => SortKey::Blocked,
        Some(other) => return Err(ApiError::bad_request(format!("unknown sort key {other:?}"))),
    })
}

fn parse_order(s: Option<&str>) -> Result<Option<SortOrder>, ApiError> {
    match s {
        None | Some("") => Ok(None),
        Some("asc") => Ok(Some(SortOrder::Asc)),
        Some("desc") => Ok(Some(SortOrder::Desc)),
        Some(other) => Err(ApiError::bad_request(format!("order must be asc or desc, not {other:?}"))),
    }
}

/// Status symbol of a row: ok, warning (unblocked tracker) or blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    NonTracker,
    UnblockedTracker,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRow {
    #[serde(flatten)]
    pub stat: DomainStat,
    pub status: RowStatus,
}

impl From<DomainStat> for DomainRow {
    fn from(stat: DomainStat) -> Self {
        let status = match (stat.blocked, stat.label) {
            (true, _) => RowStatus::Blocked,
            (false, Label::Tracker) => RowStatus::UnblockedTracker,
            (false, Label::NonTracker) => RowStatus::NonTracker,
        };
        DomainRow { stat, status }
    }
}

async fn device_domains(State(s): State<AppState>, Path(key): Path<String>, Query(p): Query<DomainParams>) -> ApiResult {
    let label = parse_label(p.label.as_deref())?;
    let sort = parse_sort(p.sort.as_deref())?;
    let order = parse_order(p.order.as_deref())?;
    let rows = s.store.device_domain_list(&key, label, sort, order)?;
    Ok(ok(rows.into_iter().map(DomainRow::from).collect::<Vec<_>>()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub window: WindowInfo,
    pub outgoing_series: Vec<SeriesPoint<f64>>,
    pub top_trackers: Vec<DomainCount>,
    pub top_non_trackers: Vec<DomainCount>,
    pub per_device_pie: Vec<DeviceSlice>,
    pub alluvial: AlluvialGraph,
}

pub fn dashboard_of(st: &StoreState, window_secs: Option<u64>) -> Result<Dashboard, ApiError> {
    let window = trailing_window(st, window_secs)?;
    let series = if window.end == Timestamp::ZERO {
        Vec::new()
    } else {
        query::outgoing_traffic_series(st, &Scope::All, TimeWindow::new(window.start, window.end))
    };
    Ok(Dashboard {
        window,
        outgoing_series: series,
        top_trackers: query::top_domains(st, TOP_K, Label::Tracker, &Scope::All)?,
        top_non_trackers: query::top_domains(st, TOP_K, Label::NonTracker, &Scope::All)?,
        per_device_pie: query::device_domain_pie(st, &Scope::All),
        alluvial: query::alluvial(st, &Scope::All),
    })
}

async fn dashboard(State(s): State<AppState>, Query(p): Query<WindowParams>) -> ApiResult {
    let d = s.store.read(|st| dashboard_of(st, p.window))?;
    Ok(ok(d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlocklistView {
    pub version: u64,
    pub domains: Vec<Fqdn>,
}

fn blocklist_view(store: &BlockListStore) -> BlocklistView {
    let snap = store.snapshot();
    BlocklistView { version: snap.version, domains: snap.domains().into_iter().cloned().collect() }
}

async fn blocklist(State(s): State<AppState>) -> ApiResult {
    Ok(ok(blocklist_view(&s.blocklist)))
}

#[derive(Debug, Deserialize)]
pub struct BlockRequest {
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResponse {
    pub domain: Fqdn,
    pub blocked: bool,
    pub version: u64,
    pub changed: bool,
}

async fn block(State(s): State<AppState>, body: Result<Json<BlockRequest>, axum::extract::rejection::JsonRejection>) -> ApiResult {
    apply_block(s, body, true).await
}

async fn unblock(State(s): State<AppState>, body: Result<Json<BlockRequest>, axum::extract::rejection::JsonRejection>) -> ApiResult {
    apply_block(s, body, false).await
}

/// Persists the change, refreshes the store's flags, then acknowledges.
async fn apply_block(
    s: AppState,
    body: Result<Json<BlockRequest>, axum::extract::rejection::JsonRejection>,
    blocked: bool,
) -> ApiResult {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let list = s.blocklist.clone();
    let domain = req.domain.clone();
    let change: BlockChange = tokio::task::spawn_blocking(move || {
        if blocked {
            list.block(&domain)
        } else {
            list.unblock(&domain)
        }
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    s.store.apply_blocklist(s.blocklist.snapshot());
    let fqdn = Fqdn::parse(&req.domain).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let resp = BlockResponse { domain: fqdn, blocked, version: change.version, changed: change.changed };
    if change.changed {
        s.hub.publish(PushKind::BlockChanged, serde_json::to_value(&resp).expect("serializable"));
    }
    Ok(ok(resp))
}

async fn schema() -> Response {
    ([(axum::http::header::CONTENT_TYPE, "application/json")], OPENAPI).into_response()
}

fn sse_event(seq: u64, kind: PushKind, payload: Value) -> Event {
    let ev = PushEvent { seq, kind, payload };
    Event::default()
        .id(seq.to_string())
        .event(kind.as_str())
        .data(serde_json::to_string(&ev).expect("serializable"))
}

/// Resync marker first, then live events. Lagging connections are closed.
async fn events(State(s): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = s.hub.subscribe();
    let view = blocklist_view(&s.blocklist);
    let resync = json!({
        "blocklist_version": view.version,
        "blocked": view.domains,
        "ruleset_version": s.store.labeler().version,
    });
    let first = stream::once(async move { Ok(sse_event(1, PushKind::Resync, resync)) });
    let rest = stream::unfold((rx, 1u64), |(mut rx, seq)| async move {
        match rx.recv().await {
            Ok(p) => {
                let seq = seq + 1;
                Some((Ok(sse_event(seq, p.kind, p.payload.clone())), (rx, seq)))
            }
            Err(RecvError::Lagged(n)) => {
                tracing::warn!(missed = n, "closing lagging event subscriber");
                None
            }
            Err(RecvError::Closed) => None,
        }
    });
    use futures_util::StreamExt;
    Sse::new(first.chain(rest)).keep_alive(KeepAlive::default())
}
