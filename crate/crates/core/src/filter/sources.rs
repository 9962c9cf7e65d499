//! Catalogs of downloadable filter lists and their on-disk snapshots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ruleset::{Label, ListInput};
use crate::name::Fqdn;
use crate::time::Timestamp;

/// Name of the file a refresh writes next to the catalog.
pub const FETCH_LOG: &str = "fetched.json";

#[derive(Debug, Error)]
pub enum SourcesError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad catalog {path}: {message}")]
    Catalog { path: PathBuf, message: String },
    #[error("list {name} has no snapshot at {path}")]
    Missing { name: String, path: PathBuf },
    #[error("probe line {line}: {message}")]
    Probe { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListSource {
    pub name: String,
    pub url: String,
    pub file: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListCatalog {
    #[serde(default, rename = "list")]
    pub lists: Vec<ListSource>,
}

fn read(path: &Path) -> Result<String, SourcesError> {
    fs::read_to_string(path).map_err(|source| SourcesError::Io { path: path.to_owned(), source })
}

impl ListCatalog {
    pub fn parse(text: &str, path: &Path) -> Result<Self, SourcesError> {
        let cat: ListCatalog =
            toml::from_str(text).map_err(|e| SourcesError::Catalog { path: path.to_owned(), message: e.to_string() })?;
        let mut names = std::collections::BTreeSet::new();
        for l in &cat.lists {
            if !names.insert(&l.name) || l.file.contains('/') || l.file.is_empty() {
                return Err(SourcesError::Catalog {
                    path: path.to_owned(),
                    message: format!("list {:?} repeated or has a bad file name", l.name),
                });
            }
        }
        Ok(cat)
    }

    pub fn load(path: &Path) -> Result<Self, SourcesError> {
        Self::parse(&read(path)?, path)
    }
}

/// Fetch times recorded by a refresh, keyed by list name.
pub fn read_fetch_log(dir: &Path) -> BTreeMap<String, Timestamp> {
    fs::read_to_string(dir.join(FETCH_LOG)).ok().and_then(|t| serde_json::from_str(&t).ok()).unwrap_or_default()
}

pub fn write_fetch_log(dir: &Path, log: &BTreeMap<String, Timestamp>) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(log).map_err(std::io::Error::other)?;
    fs::write(dir.join(FETCH_LOG), json + "\n")
}

/// Reads every catalog entry's snapshot from `dir`. All lists must be present.
pub fn load_snapshot(catalog: &ListCatalog, dir: &Path) -> Result<Vec<ListInput>, SourcesError> {
    let fetched = read_fetch_log(dir);
    catalog
        .lists
        .iter()
        .map(|l| {
            let path = dir.join(&l.file);
            if !path.is_file() {
                return Err(SourcesError::Missing { name: l.name.clone(), path });
            }
            Ok(ListInput {
                name: l.name.clone(),
                location: l.url.clone(),
                text: read(&path)?,
                fetched_at: fetched.get(&l.name).copied(),
            })
        })
        .collect()
}

/// Parses `fqdn label` lines, `#` comments allowed.
pub fn parse_probes(text: &str) -> Result<Vec<(Fqdn, Label)>, SourcesError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| SourcesError::Probe { line: i + 1, message };
        let mut parts = line.split_whitespace();
        let (Some(name), Some(label), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `fqdn label`".into()));
        };
        let fqdn = Fqdn::parse(name).map_err(|e| err(e.to_string()))?;
        let label = match label {
            "tracker" => Label::Tracker,
            "non_tracker" => Label::NonTracker,
            other => return Err(err(format!("unknown label {other:?}"))),
        };
        out.push((fqdn, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUNDLED_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/lists/firebog");

    #[test]
    fn bundled_catalog_and_probes_parse() {
        let dir = Path::new(BUNDLED_DIR);
        let cat = ListCatalog::load(&dir.join("sources.toml")).unwrap();
        assert_eq!(cat.lists.len(), 10);
        let probes = parse_probes(&read(&dir.join("probes.txt")).unwrap()).unwrap();
        assert_eq!(probes.iter().filter(|p| p.1 == Label::Tracker).count(), 20);
        assert!(probes.contains(&(Fqdn::parse("amazonalexa.com").unwrap(), Label::NonTracker)));
    }

    #[test]
    fn snapshot_requires_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let cat = ListCatalog::parse(
            "[[list]]\nname = \"a\"\nurl = \"http://x/a\"\nfile = \"a.txt\"\n",
            Path::new("inline"),
        )
        .unwrap();
        assert!(matches!(load_snapshot(&cat, dir.path()), Err(SourcesError::Missing { .. })));
        fs::write(dir.path().join("a.txt"), "0.0.0.0 t.example\n").unwrap();
        let mut log = BTreeMap::new();
        log.insert("a".to_string(), Timestamp::from_secs(9));
        write_fetch_log(dir.path(), &log).unwrap();
        let lists = load_snapshot(&cat, dir.path()).unwrap();
        assert_eq!(lists[0].fetched_at, Some(Timestamp::from_secs(9)));
        assert_eq!(lists[0].location, "http://x/a");
    }

    #[test]
    fn bad_catalogs_and_probes() {
        let dup = "[[list]]\nname='a'\nurl='u'\nfile='a'\n[[list]]\nname='a'\nurl='u'\nfile='b'\n";
        assert!(ListCatalog::parse(dup, Path::new("x")).is_err());
        assert!(ListCatalog::parse("[[list]]\nname='a'\nurl='u'\nfile='../a'\n", Path::new("x")).is_err());
        assert!(parse_probes("a.example maybe\n").is_err());
        assert!(parse_probes("a.example\n").is_err());
    }
}
