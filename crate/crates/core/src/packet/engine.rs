use std::net::IpAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::device::{DeviceRegistry, UNKNOWN_DEVICE};
use super::frame::decode_ethernet;
use super::ipmap::IpDomainMap;
use super::meta::{Protocol, RawPacketMeta};
use crate::dns::{parse_response, AnswerData, ResponseError, WireError};
use crate::name::Fqdn;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsAnswerEvent {
    pub timestamp: Timestamp,
    pub device_key: String,
    pub device_ip: IpAddr,
    pub qname: Fqdn,
    pub answers: Vec<AnswerData>,
    /// Number of A/AAAA/CNAME records in `answers`.
    pub ancount: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FlowProtocol {
    Tcp,
    Udp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub timestamp: Timestamp,
    pub device_key: String,
    pub device_ip: IpAddr,
    pub protocol: FlowProtocol,
    pub dst_ip: IpAddr,
    pub dst_port: u16,
    pub payload_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaptureEvent {
    Dns(DnsAnswerEvent),
    Flow(FlowEvent),
}

impl CaptureEvent {
    pub fn timestamp(&self) -> Timestamp {
        match self {
            CaptureEvent::Dns(e) => e.timestamp,
            CaptureEvent::Flow(e) => e.timestamp,
        }
    }

    pub fn device_key(&self) -> &str {
        match self {
            CaptureEvent::Dns(e) => &e.device_key,
            CaptureEvent::Flow(e) => &e.device_key,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DnsPacketError {
    #[error("not a DNS response with answers")]
    NotDnsResponse,
    #[error("malformed DNS packet: {0}")]
    Malformed(WireError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowResolution {
    Domain(Fqdn),
    Unresolved,
}

/// Why a packet produced no event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Ethernet/IP framing could not be decoded, or not IP at all.
    BadFrame,
    MalformedDns,
    NotDnsResponse,
    /// Neither TCP nor UDP.
    NotTransport,
    /// TCP/UDP packet whose source is not a monitored device (inbound traffic).
    NotFromDevice,
}

impl DropReason {
    pub const ALL: [DropReason; 5] = [
        DropReason::BadFrame,
        DropReason::MalformedDns,
        DropReason::NotDnsResponse,
        DropReason::NotTransport,
        DropReason::NotFromDevice,
    ];
}

#[derive(Debug, Default)]
struct Counters {
    packets: AtomicU64,
    dns_events: AtomicU64,
    flow_events: AtomicU64,
    drops: [AtomicU64; 5],
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestStats {
    pub packets: u64,
    pub dns_events: u64,
    pub flow_events: u64,
    pub drops: std::collections::BTreeMap<DropReason, u64>,
}

impl IngestStats {
    pub fn total_drops(&self) -> u64 {
        self.drops.values().sum()
    }
}

/// Turns packets into DNS-answer and flow events and keeps the IP-to-domain map current.
#[derive(Debug)]
pub struct PacketEngine {
    registry: RwLock<Arc<DeviceRegistry>>,
    map: Arc<IpDomainMap>,
    counters: Counters,
}

impl PacketEngine {
    pub fn new(registry: DeviceRegistry, map: Arc<IpDomainMap>) -> Self {
        PacketEngine { registry: RwLock::new(Arc::new(registry)), map, counters: Counters::default() }
    }

    pub fn map(&self) -> &Arc<IpDomainMap> {
        &self.map
    }

    pub fn registry(&self) -> Arc<DeviceRegistry> {
        self.registry.read().clone()
    }

    pub fn set_registry(&self, registry: DeviceRegistry) {
        *self.registry.write() = Arc::new(registry);
    }

    /// Parses a port-53 UDP payload as a response to the device on the destination side.
    pub fn parse_dns_response(&self, meta: &RawPacketMeta) -> Result<DnsAnswerEvent, DnsPacketError> {
        let parsed = parse_response(&meta.payload).map_err(|e| match e {
            ResponseError::NotResponse => DnsPacketError::NotDnsResponse,
            ResponseError::Malformed(w) => DnsPacketError::Malformed(w),
        })?;
        let device_key = self
            .registry
            .read()
            .resolve(meta.dst_mac, meta.dst_ip)
            .unwrap_or_else(|| UNKNOWN_DEVICE.to_owned());
        Ok(DnsAnswerEvent {
            timestamp: meta.timestamp,
            device_key,
            device_ip: meta.dst_ip,
            qname: parsed.qname,
            ancount: parsed.answers.len() as u16,
            answers: parsed.answers,
        })
    }

    fn drop_packet(&self, reason: DropReason) -> Option<CaptureEvent> {
        self.counters.drops[reason as usize].fetch_add(1, Ordering::Relaxed);
        None
    }

    /// Processes one decoded packet. Every call yields either one event or one drop.
    pub fn ingest(&self, meta: &RawPacketMeta) -> Option<CaptureEvent> {
        self.counters.packets.fetch_add(1, Ordering::Relaxed);
        if meta.is_dns_udp() {
            return match self.parse_dns_response(meta) {
                Ok(ev) => {
                    for a in &ev.answers {
                        let ip = match a {
                            AnswerData::A(v4) => IpAddr::V4(*v4),
                            AnswerData::Aaaa(v6) => IpAddr::V6(*v6),
                            AnswerData::Cname(_) => continue,
                        };
                        // null answers from the sinkhole say nothing about real hosts
                        if !ip.is_unspecified() {
                            self.map.update(ip, ev.qname.clone(), ev.timestamp);
                        }
                    }
                    self.counters.dns_events.fetch_add(1, Ordering::Relaxed);
                    Some(CaptureEvent::Dns(ev))
                }
                Err(DnsPacketError::NotDnsResponse) => self.drop_packet(DropReason::NotDnsResponse),
                Err(DnsPacketError::Malformed(_)) => self.drop_packet(DropReason::MalformedDns),
            };
        }
        let protocol = match meta.protocol {
            Protocol::Tcp => FlowProtocol::Tcp,
            Protocol::Udp => FlowProtocol::Udp,
            Protocol::Other => return self.drop_packet(DropReason::NotTransport),
        };
        let Some(device_key) = self.registry.read().resolve(meta.src_mac, meta.src_ip) else {
            return self.drop_packet(DropReason::NotFromDevice);
        };
        self.counters.flow_events.fetch_add(1, Ordering::Relaxed);
        Some(CaptureEvent::Flow(FlowEvent {
            timestamp: meta.timestamp,
            device_key,
            device_ip: meta.src_ip,
            protocol,
            dst_ip: meta.dst_ip,
            dst_port: meta.dst_port,
            payload_bytes: meta.payload.len() as u64,
        }))
    }

    /// Decodes an Ethernet frame and ingests it; undecodable frames count as drops.
    pub fn ingest_frame(&self, timestamp: Timestamp, frame: &[u8]) -> Option<CaptureEvent> {
        match decode_ethernet(timestamp, frame) {
            Ok(meta) => self.ingest(&meta),
            Err(_) => {
                self.counters.packets.fetch_add(1, Ordering::Relaxed);
                self.drop_packet(DropReason::BadFrame)
            }
        }
    }

    pub fn resolve_flow_domain(&self, flow: &FlowEvent) -> FlowResolution {
        resolve_flow_domain(flow, &self.map)
    }

    pub fn stats(&self) -> IngestStats {
        let c = &self.counters;
        IngestStats {
            packets: c.packets.load(Ordering::Relaxed),
            dns_events: c.dns_events.load(Ordering::Relaxed),
            flow_events: c.flow_events.load(Ordering::Relaxed),
            drops: DropReason::ALL
                .iter()
                .map(|r| (*r, c.drops[*r as usize].load(Ordering::Relaxed)))
                .collect(),
        }
    }
}

pub fn resolve_flow_domain(flow: &FlowEvent, map: &IpDomainMap) -> FlowResolution {
    match map.lookup(flow.dst_ip, flow.timestamp) {
        Some(d) => FlowResolution::Domain(d),
        None => FlowResolution::Unresolved,
    }
}
