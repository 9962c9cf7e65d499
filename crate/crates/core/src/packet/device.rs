use std::collections::HashMap;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::meta::MacAddr;

pub const UNKNOWN_DEVICE: &str = "unknown";

/// A configured device. At least one of `mac` / `ip` should be set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub key: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub mac: Option<MacAddr>,
    #[serde(default)]
    pub ip: Option<IpAddr>,
}

/// Maps link/network addresses to device keys.
///
/// MAC is the primary key, with the IP address as fallback. With `auto_discover`
/// any host on a private or link-local address counts as a monitored device, keyed
/// by its MAC (or IP when no MAC is available).
#[derive(Debug, Clone, Default)]
pub struct DeviceRegistry {
    by_mac: HashMap<MacAddr, String>,
    by_ip: HashMap<IpAddr, String>,
    names: HashMap<String, String>,
    auto_discover: bool,
}

impl DeviceRegistry {
    pub fn new(devices: &[DeviceConfig], auto_discover: bool) -> Self {
        let mut r = DeviceRegistry { auto_discover, ..Default::default() };
        for d in devices {
            if let Some(mac) = d.mac {
                r.by_mac.insert(mac, d.key.clone());
            }
            if let Some(ip) = d.ip {
                r.by_ip.insert(ip, d.key.clone());
            }
            if let Some(name) = &d.name {
                r.names.insert(d.key.clone(), name.clone());
            }
        }
        r
    }

    pub fn auto_discovering() -> Self {
        DeviceRegistry { auto_discover: true, ..Default::default() }
    }

    /// The device key for a host, or `None` if the host is not monitored.
    pub fn resolve(&self, mac: Option<MacAddr>, ip: IpAddr) -> Option<String> {
        if let Some(key) = mac.and_then(|m| self.by_mac.get(&m)) {
            return Some(key.clone());
        }
        if let Some(key) = self.by_ip.get(&ip) {
            return Some(key.clone());
        }
        if self.auto_discover && is_local(ip) {
            return Some(match mac {
                Some(m) => m.to_string(),
                None => ip.to_string(),
            });
        }
        None
    }

    pub fn display_name(&self, key: &str) -> String {
        self.names.get(key).cloned().unwrap_or_else(|| key.to_owned())
    }
}

pub fn is_local(ip: IpAddr) -> bool {
    match ip {
        IpAddr::V4(v4) => {
            let o = v4.octets();
            v4.is_private() || v4.is_link_local() || (o[0] == 100 && (o[1] & 0xc0) == 64)
        }
        IpAddr::V6(v6) => {
            let s = v6.segments()[0];
            (s & 0xfe00) == 0xfc00 || (s & 0xffc0) == 0xfe80
        }
    }
}
