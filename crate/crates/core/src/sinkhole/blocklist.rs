use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::Serialize;
use thiserror::Error;

use crate::filter::{longest_match, MatchMode};
use crate::name::{Fqdn, NameError};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum BlockListError {
    #[error("invalid domain: {0}")]
    InvalidDomain(#[from] NameError),
    #[error("failed to persist blocklist: {0}")]
    Io(#[from] io::Error),
}

/// Network-wide set of blocked names. Values are immutable; mutations build a new one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockList {
    blocked: HashMap<Fqdn, ()>,
    mode: MatchMode,
    pub updated_at: Timestamp,
    pub version: u64,
}

impl BlockList {
    pub fn new(mode: MatchMode) -> Self {
        BlockList { blocked: HashMap::new(), mode, updated_at: Timestamp::ZERO, version: 0 }
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.blocked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocked.is_empty()
    }

    pub fn contains(&self, fqdn: &str) -> bool {
        self.blocked.contains_key(fqdn)
    }

    /// The blocked entry covering `fqdn`, longest first.
    pub fn matching_rule(&self, fqdn: &Fqdn) -> Option<&Fqdn> {
        longest_match(&self.blocked, fqdn, self.mode).map(|(k, _)| k)
    }

    pub fn is_blocked(&self, fqdn: &Fqdn) -> bool {
        self.matching_rule(fqdn).is_some()
    }

    pub fn domains(&self) -> Vec<&Fqdn> {
        let mut v: Vec<_> = self.blocked.keys().collect();
        v.sort();
        v
    }

    /// Adds `fqdn`; the version only moves when the set changes.
    pub fn block(&self, fqdn: Fqdn, at: Timestamp) -> BlockList {
        if self.blocked.contains_key(&fqdn) {
            return self.clone();
        }
        let mut next = self.clone();
        next.blocked.insert(fqdn, ());
        next.version += 1;
        next.updated_at = at;
        next
    }

    pub fn unblock(&self, fqdn: &Fqdn, at: Timestamp) -> BlockList {
        if !self.blocked.contains_key(fqdn) {
            return self.clone();
        }
        let mut next = self.clone();
        next.blocked.remove(fqdn);
        next.version += 1;
        next.updated_at = at;
        next
    }

    fn to_file_text(&self) -> String {
        let mut s = format!("# version: {}\n", self.version);
        for d in self.domains() {
            s.push_str(d.as_str());
            s.push('\n');
        }
        s
    }

    fn from_file_text(text: &str, mode: MatchMode) -> Result<Self, BlockListError> {
        let mut bl = BlockList::new(mode);
        for line in text.lines() {
            let line = line.trim();
            if let Some(v) = line.strip_prefix("# version:") {
                bl.version = v.trim().parse().unwrap_or(0);
            } else if !line.is_empty() && !line.starts_with('#') {
                bl.blocked.insert(Fqdn::parse(line)?, ());
            }
        }
        Ok(bl)
    }
}

pub fn block_domain(fqdn: Fqdn, blocklist: &BlockList) -> BlockList {
    blocklist.block(fqdn, Timestamp::now())
}

pub fn unblock_domain(fqdn: &Fqdn, blocklist: &BlockList) -> BlockList {
    blocklist.unblock(fqdn, Timestamp::now())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockChange {
    pub version: u64,
    pub changed: bool,
}

/// The live blocklist: readers take cheap snapshots, writers are serialized and each
/// change is written to disk before it becomes visible.
#[derive(Debug)]
pub struct BlockListStore {
    current: RwLock<Arc<BlockList>>,
    writer: Mutex<()>,
    path: Option<PathBuf>,
}

impl BlockListStore {
    pub fn in_memory(mode: MatchMode) -> Self {
        BlockListStore { current: RwLock::new(Arc::new(BlockList::new(mode))), writer: Mutex::new(()), path: None }
    }

    /// Loads the newline-delimited file at `path`, starting empty if it does not exist.
    pub fn open(path: impl Into<PathBuf>, mode: MatchMode) -> Result<Self, BlockListError> {
        let path = path.into();
        let bl = match fs::read_to_string(&path) {
            Ok(text) => BlockList::from_file_text(&text, mode)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => BlockList::new(mode),
            Err(e) => return Err(e.into()),
        };
        Ok(BlockListStore { current: RwLock::new(Arc::new(bl)), writer: Mutex::new(()), path: Some(path) })
    }

    pub fn snapshot(&self) -> Arc<BlockList> {
        self.current.read().clone()
    }

    pub fn version(&self) -> u64 {
        self.current.read().version
    }

    fn apply(&self, f: impl FnOnce(&BlockList) -> BlockList) -> Result<BlockChange, BlockListError> {
        let _w = self.writer.lock();
        let cur = self.snapshot();
        let next = f(&cur);
        if next.version == cur.version {
            return Ok(BlockChange { version: cur.version, changed: false });
        }
        if let Some(path) = &self.path {
            persist(path, &next.to_file_text())?;
        }
        let version = next.version;
        *self.current.write() = Arc::new(next);
        Ok(BlockChange { version, changed: true })
    }

    pub fn block(&self, domain: &str) -> Result<BlockChange, BlockListError> {
        let fqdn = Fqdn::parse(domain)?;
        self.apply(|bl| bl.block(fqdn, Timestamp::now()))
    }

    pub fn unblock(&self, domain: &str) -> Result<BlockChange, BlockListError> {
        let fqdn = Fqdn::parse(domain)?;
        self.apply(|bl| bl.unblock(&fqdn, Timestamp::now()))
    }
}

fn persist(path: &Path, text: &str) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
