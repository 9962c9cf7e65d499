//! Fan-out of push events to stream subscribers.
//!
//! Publishing never waits on subscribers. A subscriber that falls more than the
//! buffer behind is disconnected and resyncs when it reconnects.

use std::sync::Arc;

use iotlens_core::pipeline::Update;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::broadcast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PushKind {
    /// First event on every connection: the full blocklist state to apply.
    Resync,
    DomainContacted,
    TrafficSample,
    BlockChanged,
    DeviceSeen,
}

impl PushKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PushKind::Resync => "resync",
            PushKind::DomainContacted => "domain_contacted",
            PushKind::TrafficSample => "traffic_sample",
            PushKind::BlockChanged => "block_changed",
            PushKind::DeviceSeen => "device_seen",
        }
    }
}

/// One event as delivered; `seq` counts from 1 per connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushEvent {
    pub seq: u64,
    pub kind: PushKind,
    pub payload: Value,
}

#[derive(Debug, Clone)]
pub struct Published {
    pub kind: PushKind,
    pub payload: Value,
}

#[derive(Debug, Clone)]
pub struct EventHub {
    tx: broadcast::Sender<Arc<Published>>,
}

impl EventHub {
    pub fn new(buffer: usize) -> Self {
        let (tx, _) = broadcast::channel(buffer.max(1));
        EventHub { tx }
    }

    pub fn publish(&self, kind: PushKind, payload: Value) {
        // no subscribers is fine
        let _ = self.tx.send(Arc::new(Published { kind, payload }));
    }

    pub fn publish_update(&self, update: &Update) {
        let (kind, payload) = match update {
            Update::DeviceSeen { device } => (PushKind::DeviceSeen, serde_json::to_value(device)),
            Update::DomainContacted { stat } => (PushKind::DomainContacted, serde_json::to_value(stat)),
            Update::TrafficSample { device_key, bucket, stat } => (
                PushKind::TrafficSample,
                Ok(serde_json::json!({ "device_key": device_key, "bucket": bucket, "stat": stat })),
            ),
        };
        self.publish(kind, payload.expect("event types serialize"));
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<Published>> {
        self.tx.subscribe()
    }

    pub fn subscriber_count(&self) -> usize {
        self.tx.receiver_count()
    }
}
