use std::collections::HashMap;
use std::net::IpAddr;
use std::time::Duration;

use parking_lot::RwLock;

use crate::name::Fqdn;
use crate::time::Timestamp;

pub const DEFAULT_MAP_TTL: Duration = Duration::from_secs(24 * 3600);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapEntry {
    pub fqdn: Fqdn,
    pub updated: Timestamp,
}

/// IP address to the domain name most recently resolved to it.
///
/// Writers are serialized behind the lock; an entry is replaced only by an update with
/// an equal or newer timestamp. Entries older than the TTL (relative to the lookup
/// time) are invisible and get dropped by [`IpDomainMap::evict_expired`].
#[derive(Debug)]
pub struct IpDomainMap {
    entries: RwLock<HashMap<IpAddr, MapEntry>>,
    ttl: Duration,
}

impl Default for IpDomainMap {
    fn default() -> Self {
        IpDomainMap::new(DEFAULT_MAP_TTL)
    }
}

impl IpDomainMap {
    pub fn new(ttl: Duration) -> Self {
        IpDomainMap { entries: RwLock::new(HashMap::new()), ttl }
    }

    pub fn update(&self, ip: IpAddr, fqdn: Fqdn, at: Timestamp) {
        let mut g = self.entries.write();
        match g.get_mut(&ip) {
            Some(e) if e.updated > at => {}
            Some(e) => {
                e.fqdn = fqdn;
                e.updated = at;
            }
            None => {
                g.insert(ip, MapEntry { fqdn, updated: at });
            }
        }
    }

    pub fn lookup(&self, ip: IpAddr, now: Timestamp) -> Option<Fqdn> {
        let g = self.entries.read();
        g.get(&ip).filter(|e| now.since(e.updated) <= self.ttl).map(|e| e.fqdn.clone())
    }

    pub fn entry(&self, ip: IpAddr) -> Option<MapEntry> {
        self.entries.read().get(&ip).cloned()
    }

    pub fn evict_expired(&self, now: Timestamp) -> usize {
        let mut g = self.entries.write();
        let before = g.len();
        g.retain(|_, e| now.since(e.updated) <= self.ttl);
        before - g.len()
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.read().is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(s: &str) -> Fqdn {
        Fqdn::parse(s).unwrap()
    }

    #[test]
    fn last_writer_wins_on_timestamp() {
        let m = IpDomainMap::default();
        let ip: IpAddr = "203.0.113.9".parse().unwrap();
        m.update(ip, n("d1.example"), Timestamp::from_secs(1));
        m.update(ip, n("d2.example"), Timestamp::from_secs(2));
        assert_eq!(m.lookup(ip, Timestamp::from_secs(3)), Some(n("d2.example")));
        // a late-arriving older answer does not clobber
        m.update(ip, n("old.example"), Timestamp::from_secs(1));
        assert_eq!(m.lookup(ip, Timestamp::from_secs(3)), Some(n("d2.example")));
    }

    #[test]
    fn ttl_expiry() {
        let m = IpDomainMap::new(Duration::from_secs(10));
        let ip: IpAddr = "10.0.0.1".parse().unwrap();
        m.update(ip, n("a.example"), Timestamp::from_secs(0));
        assert!(m.lookup(ip, Timestamp::from_secs(10)).is_some());
        assert!(m.lookup(ip, Timestamp::from_secs(11)).is_none());
        assert_eq!(m.evict_expired(Timestamp::from_secs(11)), 1);
        assert!(m.is_empty());
    }

    proptest! {
        #[test]
        fn matches_append_only_log(ops in prop::collection::vec((0u8..4, 0usize..5, 0i64..50), 1..200)) {
            let names = ["a.example", "b.example", "c.example", "d.example", "e.example"];
            let m = IpDomainMap::default();
            let mut log: Vec<(IpAddr, &str, i64)> = Vec::new();
            for (ip, name, t) in &ops {
                let ip = IpAddr::from([10, 0, 0, *ip]);
                m.update(ip, n(names[*name]), Timestamp::from_secs(*t));
                log.push((ip, names[*name], *t));
            }
            for last in 0u8..4 {
                let ip = IpAddr::from([10, 0, 0, last]);
                // latest timestamp; among equal timestamps the later write wins
                let expected = log.iter().filter(|e| e.0 == ip)
                    .fold(None::<(&str, i64)>, |acc, e| match acc {
                        Some((_, t)) if t > e.2 => acc,
                        _ => Some((e.1, e.2)),
                    })
                    .map(|(name, _)| n(name));
                prop_assert_eq!(m.lookup(ip, Timestamp::from_secs(50)), expected);
            }
        }
    }
}
