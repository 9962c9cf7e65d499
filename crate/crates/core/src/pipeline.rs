//! Capture to store: decodes frames, attributes them and applies the resulting
//! events to the telemetry store in arrival order.

use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::packet::capture::CaptureSource;
use crate::packet::{CaptureEvent, PacketEngine};
use crate::store::{DeviceRecord, DomainStat, TelemetryStore, TrafficBucket};

/// What one ingested event changed, for live subscribers. Each event yields exactly
/// one `DomainContacted` or `TrafficSample`, preceded by `DeviceSeen` for new devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Update {
    DeviceSeen { device: DeviceRecord },
    DomainContacted { stat: DomainStat },
    /// A flow; `stat` is set when its destination resolved to a name.
    TrafficSample { device_key: String, bucket: TrafficBucket, stat: Option<DomainStat> },
}

pub type UpdateObserver = Arc<dyn Fn(&Update) + Send + Sync>;

pub struct Pipeline {
    engine: Arc<PacketEngine>,
    store: Arc<TelemetryStore>,
    observer: Option<UpdateObserver>,
}

impl Pipeline {
    pub fn new(engine: Arc<PacketEngine>, store: Arc<TelemetryStore>) -> Self {
        Pipeline { engine, store, observer: None }
    }

    pub fn with_observer(mut self, observer: UpdateObserver) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn engine(&self) -> &Arc<PacketEngine> {
        &self.engine
    }

    pub fn store(&self) -> &Arc<TelemetryStore> {
        &self.store
    }

    fn emit(&self, u: Update) {
        if let Some(o) = &self.observer {
            o(&u);
        }
    }

    /// Applies one capture event. Flows are named against the map as of their own timestamp.
    pub fn apply(&self, event: &CaptureEvent) {
        let key = event.device_key();
        let new_device = self.observer.is_some() && self.store.device(key).is_none();
        match event {
            CaptureEvent::Dns(ev) => {
                let stat = self.store.record_dns(ev);
                self.announce_device(new_device, key);
                self.emit(Update::DomainContacted { stat });
            }
            CaptureEvent::Flow(ev) => {
                let resolution = self.engine.resolve_flow_domain(ev);
                let up = self.store.record_flow_resolved(ev, &resolution);
                self.announce_device(new_device, key);
                self.emit(Update::TrafficSample { device_key: ev.device_key.clone(), bucket: up.bucket, stat: up.domain });
            }
        }
    }

    fn announce_device(&self, new_device: bool, key: &str) {
        if new_device {
            if let Some(device) = self.store.device(key) {
                self.emit(Update::DeviceSeen { device });
            }
        }
    }

    pub fn ingest_frame(&self, timestamp: crate::time::Timestamp, frame: &[u8]) -> Option<CaptureEvent> {
        let ev = self.engine.ingest_frame(timestamp, frame)?;
        self.apply(&ev);
        Some(ev)
    }

    /// Drains `source` to its end, returning the number of frames read.
    pub fn run(&self, source: &mut dyn CaptureSource) -> io::Result<u64> {
        let mut n = 0;
        while let Some(frame) = source.next_frame()? {
            self.ingest_frame(frame.timestamp, &frame.data);
            n += 1;
        }
        Ok(n)
    }
}
