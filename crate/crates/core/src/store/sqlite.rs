//! Single-file SQLite persistence of the store state.

use std::collections::BTreeSet;
use std::net::IpAddr;
use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension};

use super::model::{DeviceRecord, DomainStat, StoreState, UnresolvedTotals, SCHEMA_VERSION};
use super::StoreError;
use crate::filter::Label;
use crate::name::Fqdn;
use crate::time::Timestamp;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS devices (
    device_key TEXT PRIMARY KEY,
    display_name TEXT NOT NULL,
    first_seen INTEGER NOT NULL,
    last_seen INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS device_addresses (
    device_key TEXT NOT NULL,
    address TEXT NOT NULL,
    PRIMARY KEY (device_key, address)
);
CREATE TABLE IF NOT EXISTS domain_stats (
    device_key TEXT NOT NULL,
    fqdn TEXT NOT NULL,
    sld TEXT NOT NULL,
    organization TEXT NOT NULL,
    label TEXT NOT NULL,
    matched_rule TEXT,
    access_count INTEGER NOT NULL,
    last_contacted INTEGER NOT NULL,
    blocked INTEGER NOT NULL,
    PRIMARY KEY (device_key, fqdn)
);
CREATE TABLE IF NOT EXISTS traffic_buckets (
    device_key TEXT NOT NULL,
    window_start INTEGER NOT NULL,
    outbound_bytes INTEGER NOT NULL,
    PRIMARY KEY (device_key, window_start)
);
CREATE TABLE IF NOT EXISTS unresolved (device_key TEXT PRIMARY KEY, flows INTEGER NOT NULL, bytes INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS dns_events (device_key TEXT NOT NULL, ts INTEGER NOT NULL);
CREATE INDEX IF NOT EXISTS dns_events_by_device ON dns_events (device_key, ts);
";

const META_KEYS: [&str; 5] =
    ["bucket_width_secs", "raw_retention_secs", "ruleset_version", "blocklist_version", "latest_event"];

fn bad(msg: impl Into<String>) -> StoreError {
    StoreError::InvalidArgument(msg.into())
}

fn open(path: &Path) -> Result<Connection, StoreError> {
    let conn = Connection::open(path)?;
    conn.pragma_update(None, "journal_mode", "WAL")?;
    let version: u32 = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
    if version == 0 {
        conn.execute_batch(SCHEMA)?;
        conn.pragma_update(None, "user_version", SCHEMA_VERSION)?;
    } else if version != SCHEMA_VERSION {
        return Err(StoreError::SchemaVersion(version));
    }
    Ok(conn)
}

/// Replaces the database contents with `state` in one transaction.
pub fn save(state: &StoreState, path: &Path) -> Result<(), StoreError> {
    let mut conn = open(path)?;
    let tx = conn.transaction()?;
    for t in ["meta", "devices", "device_addresses", "domain_stats", "traffic_buckets", "unresolved", "dns_events"] {
        tx.execute(&format!("DELETE FROM {t}"), [])?;
    }
    {
        let mut meta = tx.prepare("INSERT INTO meta (key, value) VALUES (?1, ?2)")?;
        let values = [
            i64::from(state.bucket_width_secs),
            state.raw_retention_secs as i64,
            state.ruleset_version as i64,
            state.blocklist_version as i64,
            state.latest_event.as_micros(),
        ];
        for (k, v) in META_KEYS.iter().zip(values) {
            meta.execute(params![k, v])?;
        }
        let mut dev = tx.prepare("INSERT INTO devices VALUES (?1, ?2, ?3, ?4)")?;
        let mut addr = tx.prepare("INSERT INTO device_addresses VALUES (?1, ?2)")?;
        for d in state.devices.values() {
            dev.execute(params![d.device_key, d.display_name, d.first_seen.as_micros(), d.last_seen.as_micros()])?;
            for a in &d.addresses {
                addr.execute(params![d.device_key, a.to_string()])?;
            }
        }
        let mut row = tx.prepare("INSERT INTO domain_stats VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)")?;
        for r in state.rows() {
            row.execute(params![
                r.device_key,
                r.fqdn.as_str(),
                r.sld.as_str(),
                r.organization,
                r.label.as_str(),
                r.matched_rule.as_ref().map(Fqdn::as_str),
                r.access_count as i64,
                r.last_contacted.as_micros(),
                r.blocked,
            ])?;
        }
        let mut bucket = tx.prepare("INSERT INTO traffic_buckets VALUES (?1, ?2, ?3)")?;
        for (dev, buckets) in &state.buckets {
            for (start, bytes) in buckets {
                bucket.execute(params![dev, start.as_micros(), *bytes as i64])?;
            }
        }
        let mut unres = tx.prepare("INSERT INTO unresolved VALUES (?1, ?2, ?3)")?;
        for (dev, u) in &state.unresolved {
            unres.execute(params![dev, u.flows as i64, u.bytes as i64])?;
        }
        let mut ev = tx.prepare("INSERT INTO dns_events VALUES (?1, ?2)")?;
        for (dev, ts) in &state.dns_events {
            for t in ts {
                ev.execute(params![dev, t.as_micros()])?;
            }
        }
    }
    tx.commit()?;
    Ok(())
}

fn parse_fqdn(s: String) -> Result<Fqdn, StoreError> {
    Fqdn::parse(&s).map_err(|e| bad(format!("stored name {s:?}: {e}")))
}

/// Reads a database written by [`save`]. `None` when it holds no state yet.
pub fn load(path: &Path) -> Result<Option<StoreState>, StoreError> {
    let conn = open(path)?;
    let meta = |k: &str| -> Result<Option<i64>, StoreError> {
        Ok(conn.query_row("SELECT value FROM meta WHERE key = ?1", [k], |r| r.get(0)).optional()?)
    };
    let Some(width) = meta(META_KEYS[0])? else {
        return Ok(None);
    };
    let mut st = StoreState::new(width as u32);
    st.raw_retention_secs = meta(META_KEYS[1])?.unwrap_or_default() as u64;
    st.ruleset_version = meta(META_KEYS[2])?.unwrap_or_default() as u64;
    st.blocklist_version = meta(META_KEYS[3])?.unwrap_or_default() as u64;
    st.latest_event = Timestamp::from_micros(meta(META_KEYS[4])?.unwrap_or_default());

    let mut q = conn.prepare("SELECT device_key, display_name, first_seen, last_seen FROM devices")?;
    let devs = q.query_map([], |r| {
        Ok(DeviceRecord {
            device_key: r.get(0)?,
            display_name: r.get(1)?,
            first_seen: Timestamp::from_micros(r.get(2)?),
            last_seen: Timestamp::from_micros(r.get(3)?),
            addresses: BTreeSet::new(),
        })
    })?;
    for d in devs {
        let d = d?;
        st.devices.insert(d.device_key.clone(), d);
    }
    let mut q = conn.prepare("SELECT device_key, address FROM device_addresses")?;
    for row in q.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))? {
        let (dev, a) = row?;
        let ip: IpAddr = a.parse().map_err(|_| bad(format!("stored address {a:?}")))?;
        st.devices.get_mut(&dev).ok_or_else(|| bad(format!("address for unknown device {dev}")))?.addresses.insert(ip);
    }
    let mut q = conn.prepare(
        "SELECT device_key, fqdn, sld, organization, label, matched_rule, access_count, last_contacted, blocked
         FROM domain_stats",
    )?;
    let rows = q.query_map([], |r| {
        Ok((
            r.get::<_, String>(0)?,
            r.get::<_, String>(1)?,
            r.get::<_, String>(2)?,
            r.get::<_, String>(3)?,
            r.get::<_, String>(4)?,
            r.get::<_, Option<String>>(5)?,
            r.get::<_, i64>(6)?,
            r.get::<_, i64>(7)?,
            r.get::<_, bool>(8)?,
        ))
    })?;
    for row in rows {
        let (device_key, fqdn, sld, organization, label, rule, count, last, blocked) = row?;
        let label = match label.as_str() {
            "tracker" => Label::Tracker,
            "non_tracker" => Label::NonTracker,
            other => return Err(bad(format!("stored label {other:?}"))),
        };
        let fqdn = parse_fqdn(fqdn)?;
        let stat = DomainStat {
            device_key: device_key.clone(),
            fqdn: fqdn.clone(),
            sld: parse_fqdn(sld)?,
            organization,
            label,
            matched_rule: rule.map(parse_fqdn).transpose()?,
            access_count: count as u64,
            last_contacted: Timestamp::from_micros(last),
            blocked,
        };
        st.domains.entry(device_key).or_default().insert(fqdn, stat);
    }
    let mut q = conn.prepare("SELECT device_key, window_start, outbound_bytes FROM traffic_buckets")?;
    for row in q.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?, r.get::<_, i64>(2)?)))? {
        let (dev, start, bytes) = row?;
        st.buckets.entry(dev).or_default().insert(Timestamp::from_micros(start), bytes as u64);
    }
    let mut q = conn.prepare("SELECT device_key, flows, bytes FROM unresolved")?;
    for row in q.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?, r.get::<_, i64>(2)?)))? {
        let (dev, flows, bytes) = row?;
        st.unresolved.insert(dev, UnresolvedTotals { flows: flows as u64, bytes: bytes as u64 });
    }
    let mut q = conn.prepare("SELECT device_key, ts FROM dns_events ORDER BY device_key, ts")?;
    for row in q.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?)))? {
        let (dev, ts) = row?;
        st.dns_events.entry(dev).or_default().push(Timestamp::from_micros(ts));
    }
    Ok(Some(st))
}
