use std::collections::BTreeSet;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::name::Fqdn;

/// Hostnames that hosts files map to loopback as boilerplate, not as rules.
const BOILERPLATE: &[&str] = &[
    "localhost",
    "localhost.localdomain",
    "local",
    "broadcasthost",
    "ip6-localhost",
    "ip6-loopback",
    "ip6-localnet",
    "ip6-mcastprefix",
    "ip6-allnodes",
    "ip6-allrouters",
    "ip6-allhosts",
    "0.0.0.0",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostsWarning {
    pub list: String,
    pub line: usize,
    pub content: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedList {
    pub domains: BTreeSet<Fqdn>,
    pub warnings: Vec<HostsWarning>,
}

/// Parses hosts-format (`0.0.0.0 domain`) or plain domain-per-line filter lists.
///
/// Blank lines and `#` comments are ignored; anything unparseable becomes a warning.
pub fn parse_hosts_list(text: &str, list_name: &str) -> ParsedList {
    let mut out = ParsedList::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut warn = |reason: String| {
            out.warnings.push(HostsWarning {
                list: list_name.to_owned(),
                line: idx + 1,
                content: raw.to_owned(),
                reason,
            })
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let names: &[&str] = if tokens[0].parse::<IpAddr>().is_ok() {
            if tokens.len() < 2 {
                warn("address without hostname".into());
                continue;
            }
            &tokens[1..]
        } else if tokens.len() == 1 {
            &tokens[..]
        } else {
            warn("expected `address hostname` or a bare hostname".into());
            continue;
        };
        for name in names {
            if BOILERPLATE.contains(&name.to_ascii_lowercase().as_str()) {
                continue;
            }
            match Fqdn::parse(name) {
                Ok(n) if n.label_count() < 2 => warn(format!("single-label name {name:?}")),
                Ok(n) => {
                    out.domains.insert(n);
                }
                Err(e) => warn(e.to_string()),
            }
        }
    }
    out
}
