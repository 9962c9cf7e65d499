//! Downloads the catalog's filter lists into their snapshot files.

use std::io::{Read, Write};
use std::path::Path;

use iotlens_core::filter::sources::{read_fetch_log, write_fetch_log};
use iotlens_core::filter::{parse_hosts_list, ListCatalog};
use iotlens_core::time::Timestamp;

const MAX_LIST_BYTES: u64 = 64 << 20;

#[derive(Debug)]
pub struct RefreshOutcome {
    pub name: String,
    pub result: Result<usize, String>,
}

fn fetch(url: &str) -> Result<String, String> {
    let resp = ureq::get(url).call().map_err(|e| e.to_string())?;
    let mut body = String::new();
    resp.into_body()
        .into_reader()
        .take(MAX_LIST_BYTES)
        .read_to_string(&mut body)
        .map_err(|e| e.to_string())?;
    Ok(body)
}

/// Fetches every list; a failed list keeps its previous snapshot.
pub fn refresh(catalog_path: &Path) -> anyhow::Result<Vec<RefreshOutcome>> {
    let catalog = ListCatalog::load(catalog_path)?;
    let dir = catalog_path.parent().unwrap_or(Path::new("."));
    let mut log = read_fetch_log(dir);
    let mut out = Vec::new();
    for l in &catalog.lists {
        let result = fetch(&l.url).and_then(|body| {
            let parsed = parse_hosts_list(&body, &l.name);
            if parsed.domains.is_empty() {
                return Err("no domains in response".to_owned());
            }
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| e.to_string())?;
            tmp.write_all(body.as_bytes()).map_err(|e| e.to_string())?;
            tmp.persist(dir.join(&l.file)).map_err(|e| e.to_string())?;
            log.insert(l.name.clone(), Timestamp::now());
            Ok(parsed.domains.len())
        });
        out.push(RefreshOutcome { name: l.name.clone(), result });
    }
    write_fetch_log(dir, &log)?;
    Ok(out)
}
