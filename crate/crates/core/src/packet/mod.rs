//! Packet capture decoding, event extraction and flow attribution.

pub mod capture;
mod device;
mod engine;
mod frame;
mod ipmap;
mod meta;
pub mod pcap;

pub use device::{is_local, DeviceConfig, DeviceRegistry, UNKNOWN_DEVICE};
pub use engine::{
    resolve_flow_domain, CaptureEvent, DnsAnswerEvent, DnsPacketError, DropReason, FlowEvent,
    FlowProtocol, FlowResolution, IngestStats, PacketEngine,
};
pub use frame::{decode_ethernet, encode_ethernet, FrameError};
pub use ipmap::{IpDomainMap, MapEntry, DEFAULT_MAP_TTL};
pub use meta::{MacAddr, Protocol, RawPacketMeta};
