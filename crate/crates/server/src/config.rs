//! TOML configuration. Every field has a default, so an empty file is valid.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use iotlens_core::filter::MatchMode;
use iotlens_core::packet::DeviceConfig;
use iotlens_core::sinkhole::BlockingMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub api: ApiConfig,
    pub capture: CaptureConfig,
    pub sinkhole: SinkholeSection,
    pub store: StoreConfig,
    pub lists: ListsConfig,
    pub devices: Vec<DeviceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    /// Pending push events per subscriber before it is dropped.
    pub event_buffer: usize,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig { bind: "127.0.0.1:8080".parse().unwrap(), event_buffer: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureConfig {
    /// Interface for live capture.
    pub interface: String,
    /// Treat any host on a private or link-local address as a device.
    pub auto_discover: bool,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        CaptureConfig { interface: "eth0".into(), auto_discover: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinkholeSection {
    pub enabled: bool,
    pub bind: SocketAddr,
    pub upstream: SocketAddr,
    pub timeout_ms: u64,
    pub blocking: BlockingMode,
}

impl Default for SinkholeSection {
    fn default() -> Self {
        SinkholeSection {
            enabled: true,
            bind: "127.0.0.1:5353".parse().unwrap(),
            upstream: "1.1.1.1:53".parse().unwrap(),
            timeout_ms: 2000,
            blocking: BlockingMode::Null,
        }
    }
}

impl SinkholeSection {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    /// Directory for the database and blocklist; nothing is persisted when unset.
    pub state_dir: Option<PathBuf>,
    pub bucket_width_secs: u32,
    pub checkpoint_secs: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { state_dir: None, bucket_width_secs: 5, checkpoint_secs: 30 }
    }
}

impl StoreConfig {
    pub fn database(&self) -> Option<PathBuf> {
        self.state_dir.as_ref().map(|d| d.join("telemetry.db"))
    }

    pub fn blocklist(&self) -> Option<PathBuf> {
        self.state_dir.as_ref().map(|d| d.join("blocklist.txt"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListsConfig {
    /// Catalog of downloadable lists; snapshots live next to it.
    pub catalog: Option<PathBuf>,
    /// Extra hosts-format files.
    pub files: Vec<PathBuf>,
    pub match_mode: MatchMode,
    pub psl: Option<PathBuf>,
    pub psl_private: bool,
    pub orgs: Option<PathBuf>,
}

impl Default for ListsConfig {
    fn default() -> Self {
        ListsConfig {
            catalog: Some(bundled_catalog()),
            files: Vec::new(),
            match_mode: MatchMode::Suffix,
            psl: None,
            psl_private: false,
            orgs: None,
        }
    }
}

/// The firebog catalog shipped in the source tree.
pub fn bundled_catalog() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/lists/firebog/sources.toml")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }
}
