use std::collections::BTreeMap;

use thiserror::Error;

use super::psl::PublicSuffixTable;
use crate::name::Fqdn;

pub const UNKNOWN_ORG: &str = "Unknown";

/// The SLD-to-organization table bundled with the crate.
pub const BUNDLED_ORGS: &str = include_str!("../../data/orgs.csv");

#[derive(Debug, Error)]
pub enum OrgTableError {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Registrable domain to operating organization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrgTable {
    entries: BTreeMap<Fqdn, String>,
}

impl OrgTable {
    /// Reads `sld,organization` rows. `#` lines and a leading `sld,organization`
    /// header are skipped; later rows override earlier ones.
    pub fn parse(text: &str) -> Result<Self, OrgTableError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut entries = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 2 {
                return Err(OrgTableError::Row { line, message: format!("expected 2 columns, got {}", rec.len()) });
            }
            if rec[0].eq_ignore_ascii_case("sld") {
                continue;
            }
            let sld = Fqdn::parse(&rec[0]).map_err(|e| OrgTableError::Row { line, message: e.to_string() })?;
            if rec[1].is_empty() {
                return Err(OrgTableError::Row { line, message: "empty organization".into() });
            }
            entries.insert(sld, rec[1].to_owned());
        }
        Ok(OrgTable { entries })
    }

    pub fn bundled() -> Self {
        OrgTable::parse(BUNDLED_ORGS).expect("bundled organization table parses")
    }

    pub fn organization_of(&self, sld: &str) -> &str {
        self.entries.get(sld).map_or(UNKNOWN_ORG, String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Fqdn, &str)> {
        self.entries.iter().map(|(k, v)| (k, v.as_str()))
    }

    /// Keys that are not their own registrable domain under `psl`.
    pub fn invalid_keys(&self, psl: &PublicSuffixTable) -> Vec<&Fqdn> {
        self.entries.keys().filter(|k| psl.registrable_domain(k).as_ref() != Some(*k)).collect()
    }
}

pub fn organization_of<'a>(sld: &str, orgs: &'a OrgTable) -> &'a str {
    orgs.organization_of(sld)
}
