#![allow(dead_code)]

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use iotlens_core::filter::ListInput;
use iotlens_core::packet::capture::MemorySource;
use iotlens_core::synth::{generate_frames, Generated, ScenarioSpec};
use iotlens_server::api::{router, OPENAPI};
use iotlens_server::config::Config;
use iotlens_server::services::Services;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn config_for(spec: &ScenarioSpec, event_buffer: usize) -> Config {
    let mut config = Config::default();
    config.lists.catalog = None;
    config.store.state_dir = None;
    config.sinkhole.enabled = false;
    config.api.event_buffer = event_buffer;
    config.store.bucket_width_secs = spec.bucket_width_secs;
    config.devices = spec.device_configs();
    config
}

pub fn services_for(spec: &ScenarioSpec, event_buffer: usize) -> Services {
    let fixture = ListInput::new("scenario-fixture", spec.fixture_filter_list());
    Services::build(config_for(spec, event_buffer), vec![fixture]).unwrap()
}

pub fn ingest(services: &Services, generated: &Generated) -> u64 {
    let mut src = MemorySource::new("scenario", generated.frames.clone());
    services.pipeline().run(&mut src).unwrap()
}

/// Services with the demo scenario fully ingested.
pub fn demo() -> (Services, Generated) {
    let spec = ScenarioSpec::demo();
    let g = generate_frames(&spec).unwrap();
    let s = services_for(&spec, 4096);
    ingest(&s, &g);
    (s, g)
}

pub fn app(services: &Services) -> Router {
    router(services.app_state())
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, "GET", uri, None).await
}

/// Binds the router on an ephemeral loopback port.
pub async fn serve(app: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

/// Incremental parser for `text/event-stream` bodies; yields each event's data.
#[derive(Default)]
pub struct SseReader {
    buf: String,
}

impl SseReader {
    pub fn feed(&mut self, chunk: &[u8]) -> Vec<Value> {
        self.buf.push_str(&String::from_utf8_lossy(chunk));
        let mut out = Vec::new();
        while let Some(end) = self.buf.find("\n\n") {
            let block: String = self.buf.drain(..end + 2).collect();
            let data: Vec<&str> = block.lines().filter_map(|l| l.strip_prefix("data:")).map(str::trim_start).collect();
            if !data.is_empty() {
                out.push(serde_json::from_str(&data.join("\n")).unwrap());
            }
        }
        out
    }
}

pub struct EventStream {
    resp: reqwest::Response,
    reader: SseReader,
    pending: std::collections::VecDeque<Value>,
}

impl EventStream {
    pub async fn open(addr: SocketAddr) -> Self {
        let resp = reqwest::get(format!("http://{addr}/api/events")).await.unwrap();
        assert_eq!(resp.status(), 200);
        EventStream { resp, reader: SseReader::default(), pending: Default::default() }
    }

    /// Next event, or None once the server closes the stream.
    pub async fn next(&mut self) -> Option<Value> {
        loop {
            if let Some(v) = self.pending.pop_front() {
                return Some(v);
            }
            match self.resp.chunk().await {
                Ok(Some(c)) => self.pending.extend(self.reader.feed(&c)),
                _ => return None,
            }
        }
    }
}

/// Read endpoints covered by golden files: (file stem, uri, envelope schema).
pub const READS: &[(&str, &str, &str)] = &[
    ("devices", "/api/devices", "DevicesEnvelope"),
    ("device_echo", "/api/devices/echo", "DeviceDetailEnvelope"),
    ("device_tv_60s", "/api/devices/tv?window=60", "DeviceDetailEnvelope"),
    ("domains_echo", "/api/devices/echo/domains", "DomainRowsEnvelope"),
    ("domains_tv_trackers", "/api/devices/tv/domains?label=tracker&sort=access_count", "DomainRowsEnvelope"),
    ("domains_camera_by_name", "/api/devices/camera/domains?sort=fqdn&order=desc", "DomainRowsEnvelope"),
    ("dashboard", "/api/dashboard", "DashboardEnvelope"),
    ("dashboard_60s", "/api/dashboard?window=60", "DashboardEnvelope"),
    ("blocklist", "/api/blocklist", "BlocklistEnvelope"),
];

/// Validation errors of `v` against a component schema of the shipped document.
pub fn schema_errors(schema: &str, v: &Value) -> Vec<String> {
    let doc: Value = serde_json::from_str(OPENAPI).unwrap();
    let root = json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "$ref": format!("#/components/schemas/{schema}"),
        "components": doc["components"],
    });
    let validator = jsonschema::validator_for(&root).unwrap();
    validator.iter_errors(v).map(|e| format!("{e} at {}", e.instance_path())).collect()
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"))
}

fn golden_text(v: &Value) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

pub fn write_golden(name: &str, v: &Value) {
    std::fs::write(golden_path(name), golden_text(v)).unwrap();
}

pub fn check_golden(name: &str, v: &Value) -> Result<(), String> {
    let path = golden_path(name);
    let want = std::fs::read_to_string(&path).map_err(|_| format!("missing {}; run with UPDATE_GOLDEN=1", path.display()))?;
    if golden_text(v) == want {
        Ok(())
    } else {
        Err(format!("{name} differs from {}", path.display()))
    }
}

fn suffix_blocked(set: &BTreeSet<String>, fqdn: &str) -> bool {
    set.iter().any(|b| fqdn == b || fqdn.ends_with(&format!(".{b}")))
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Random block/unblock sequences against a model set. After every write the
/// blocklist must equal the model; after every sequence each device's rows must
/// carry the flags the model implies.
pub async fn read_your_writes(app: &Router, g: &Generated, sequences: usize, seed: u64) -> Result<(), String> {
    let mut candidates: Vec<String> = g.manifest.domains.iter().map(|d| d.fqdn.to_string()).collect();
    let devices: BTreeSet<&str> = g.manifest.domains.iter().map(|d| d.device_key.as_str()).collect();
    candidates.extend(g.manifest.domains.iter().map(|d| d.sld.clone()));
    candidates.push("unseen.example".into());
    candidates.sort();
    candidates.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model: BTreeSet<String> = BTreeSet::new();
    let (_, bl) = get(app, "/api/blocklist").await;
    for d in bl["data"]["domains"].as_array().into_iter().flatten() {
        model.insert(d.as_str().unwrap().to_owned());
    }
    let mut version = bl["data"]["version"].as_u64().unwrap_or(0);
    for _ in 0..sequences {
        for _ in 0..rng.gen_range(1..6) {
            let d = candidates.choose(&mut rng).unwrap().clone();
            let block = rng.gen_bool(0.6);
            let uri = if block { "/api/block" } else { "/api/unblock" };
            let (status, v) = call(app, "POST", uri, Some(json!({ "domain": d }))).await;
            ensure!(status == StatusCode::OK, "{uri} {d}: {status}");
            let changed = if block { model.insert(d.clone()) } else { model.remove(&d) };
            version += u64::from(changed);
            ensure!(v["data"]["changed"] == changed && v["data"]["version"] == version, "{uri} {d}: {v}");

            let (_, bl) = get(app, "/api/blocklist").await;
            let listed: BTreeSet<String> = bl["data"]["domains"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|x| x.as_str().map(str::to_owned))
                .collect();
            ensure!(listed == model, "blocklist {listed:?} != {model:?}");
        }
        for dev in &devices {
            let (_, rows) = get(app, &format!("/api/devices/{dev}/domains")).await;
            let mut blocked_rows = 0u64;
            for r in rows["data"].as_array().into_iter().flatten() {
                let fqdn = r["fqdn"].as_str().unwrap_or_default();
                let want = suffix_blocked(&model, fqdn);
                ensure!(r["blocked"] == want, "{dev} {fqdn} blocked={} with {model:?}", r["blocked"]);
                ensure!((r["status"] == "blocked") == want, "{dev} {fqdn} status {}", r["status"]);
                blocked_rows += u64::from(want);
            }
            let (_, detail) = get(app, &format!("/api/devices/{dev}")).await;
            ensure!(detail["data"]["device"]["blocked_count"] == blocked_rows, "{dev} blocked_count");
        }
    }
    Ok(())
}

/// Demo services before anything is ingested.
pub fn demo_empty() -> (Services, Generated) {
    let spec = ScenarioSpec::demo();
    (services_for(&spec, 16), generate_frames(&spec).unwrap())
}

/// Services whose organization table is the scenario's own, for scenarios whose
/// names are not in the bundled table. Keep the directory alive while in use.
pub fn services_with_scenario_orgs(spec: &ScenarioSpec) -> (Services, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let orgs = dir.path().join("orgs.csv");
    std::fs::write(&orgs, spec.fixture_orgs_csv()).unwrap();
    let mut config = config_for(spec, 16);
    config.lists.orgs = Some(orgs);
    let fixture = ListInput::new("scenario-fixture", spec.fixture_filter_list());
    (Services::build(config, vec![fixture]).unwrap(), dir)
}
