//! Per-device visibility into IoT tracking traffic.
//!
//! The crate covers the whole data path of a home-gateway privacy monitor:
//!
//! - [`packet`]: decode captured frames, extract DNS answers and outbound flows, and
//!   attribute flows to domains through an IP-to-domain map.
//! - [`filter`]: compile hosts-format filter lists into a suffix matcher, extract
//!   registrable domains with the Public Suffix List, and map them to organizations.
//! - [`sinkhole`]: a DNS forwarder that null-answers blocked names.
//! - [`store`]: per-device domain statistics, traffic buckets and every aggregate the
//!   dashboard shows.
//! - [`synth`]: deterministic synthetic traffic with exact expected totals.

pub mod dns;
pub mod filter;
pub mod name;
pub mod packet;
pub mod pipeline;
pub mod sinkhole;
pub mod store;
pub mod synth;
pub mod time;

pub use name::{Fqdn, NameError};
pub use time::{TimeWindow, Timestamp};
