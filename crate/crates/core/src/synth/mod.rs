//! Deterministic synthetic household traffic. A scenario yields an Ethernet pcap of
//! DNS responses and outbound flows plus a manifest of every aggregate the pipeline
//! should compute from it.

mod demo;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use demo::{demo_feed, DemoFeed, LoopSource};

use crate::dns::{AnswerData, MessageBuilder, RecordType, FLAG_QR, FLAG_RA, FLAG_RD};
use crate::filter::UNKNOWN_ORG;
use crate::name::Fqdn;
use crate::packet::capture::Frame;
use crate::packet::pcap::PcapWriter;
use crate::packet::{encode_ethernet, DeviceConfig, MacAddr, Protocol, RawPacketMeta};
use crate::time::Timestamp;

pub const DEFAULT_START_SECS: i64 = 1_700_000_000;
/// Small household used by the demo mode and the API fixtures.
pub const DEMO_SCENARIO: &str = include_str!("../../data/scenarios/demo.json");
const RESOLVER_MAC: MacAddr = MacAddr([0x02, 0, 0, 0, 0, 0xfe]);
const RESOLVER_V4: Ipv4Addr = Ipv4Addr::new(192, 168, 1, 1);
const RESOLVER_V6: Ipv6Addr = Ipv6Addr::new(0xfd00, 0, 0, 0, 0, 0, 0, 1);
/// Flows this long after a domain's last DNS answer get a fresh answer first, well
/// inside the address map's lifetime.
const DNS_REFRESH_SECS: i64 = 12 * 3600;
const MAX_DOMAINS: usize = 1 << 15;
const FLOW_PORTS: [(Protocol, u16); 5] =
    [(Protocol::Tcp, 443), (Protocol::Tcp, 443), (Protocol::Tcp, 80), (Protocol::Tcp, 8883), (Protocol::Udp, 443)];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_key: String,
    pub mac: MacAddr,
    pub ip: IpAddr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub fqdn: String,
    pub is_tracker: bool,
    /// Events per minute, summed over the devices that contact the domain.
    pub contact_rate: f64,
    /// Devices contacting the domain; all devices when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub devices: Option<Vec<String>>,
    /// Expected registrable domain; the last two labels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sld: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organization: Option<String>,
}

fn default_start() -> i64 {
    DEFAULT_START_SECS
}

fn default_width() -> u32 {
    crate::store::DEFAULT_BUCKET_WIDTH_SECS
}

fn default_dns_share() -> f64 {
    0.3
}

fn default_cname_share() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub devices: Vec<DeviceSpec>,
    pub domains: Vec<DomainSpec>,
    pub duration: u64,
    /// Unix seconds of the first instant.
    #[serde(default = "default_start")]
    pub start: i64,
    #[serde(default = "default_width")]
    pub bucket_width_secs: u32,
    /// Share of repeat contacts that are fresh DNS answers rather than flows.
    #[serde(default = "default_dns_share")]
    pub dns_share: f64,
    /// Share of DNS answers that go through a CNAME.
    #[serde(default = "default_cname_share")]
    pub cname_share: f64,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }

    /// A scenario with exactly `events` contacts spread over `devices` devices and
    /// `domains` domains, about a quarter of them trackers.
    pub fn random(seed: u64, devices: usize, domains: usize, events: u64, duration: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let devs: Vec<DeviceSpec> = (0..devices)
            .map(|i| DeviceSpec {
                device_key: format!("dev-{i:02}"),
                mac: MacAddr([0x02, 0x10, 0, 0, (i >> 8) as u8, i as u8]),
                ip: if i % 4 == 3 {
                    IpAddr::V6(Ipv6Addr::new(0xfd00, 0, 0, 0, 0, 0, 0, 0x100 + i as u16))
                } else {
                    IpAddr::V4(Ipv4Addr::new(192, 168, 1, 10 + i as u8))
                },
                display_name: None,
            })
            .collect();
        let mut counts = vec![0u64; domains];
        if domains > 0 {
            // every domain gets one contact, the rest are skewed toward low indexes
            let base = events.min(domains as u64);
            for c in counts.iter_mut().take(base as usize) {
                *c = 1;
            }
            for _ in base..events {
                let a = rng.gen_range(0..domains);
                let b = rng.gen_range(0..domains);
                counts[a.min(b)] += 1;
            }
        }
        let tlds = ["com", "net", "io", "tv"];
        let doms = counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, c)| {
                let sld = format!("site{}.{}", i / 3, tlds[i % tlds.len()]);
                let mut chosen: Vec<String> = devs.iter().map(|d| d.device_key.clone()).collect();
                chosen.shuffle(&mut rng);
                chosen.truncate(rng.gen_range(1..=devs.len().max(1)));
                chosen.sort();
                DomainSpec {
                    fqdn: format!("h{i}.{sld}"),
                    is_tracker: i % 4 == 1,
                    contact_rate: *c as f64 * 60.0 / duration.max(1) as f64,
                    devices: Some(chosen),
                    organization: Some(format!("Org {}", i / 6)),
                    sld: Some(sld),
                }
            })
            .collect();
        ScenarioSpec {
            seed,
            devices: devs,
            domains: doms,
            duration,
            start: DEFAULT_START_SECS,
            bucket_width_secs: default_width(),
            dns_share: default_dns_share(),
            cname_share: default_cname_share(),
        }
    }

    pub fn demo() -> Self {
        Self::from_json(DEMO_SCENARIO).expect("bundled scenario is valid")
    }

    /// Contacts the domain receives over the whole scenario.
    pub fn contact_count(&self, domain: &DomainSpec) -> u64 {
        (domain.contact_rate * self.duration as f64 / 60.0).round() as u64
    }

    pub fn device_configs(&self) -> Vec<DeviceConfig> {
        self.devices
            .iter()
            .map(|d| DeviceConfig {
                key: d.device_key.clone(),
                name: d.display_name.clone(),
                mac: Some(d.mac),
                ip: Some(d.ip),
            })
            .collect()
    }

    /// Hosts-format list naming exactly the tracker domains.
    pub fn fixture_filter_list(&self) -> String {
        let mut out = String::from("# synthetic scenario trackers\n");
        let names: BTreeSet<&str> = self.domains.iter().filter(|d| d.is_tracker).map(|d| d.fqdn.as_str()).collect();
        for n in names {
            out.push_str("0.0.0.0 ");
            out.push_str(n);
            out.push('\n');
        }
        out
    }

    /// `sld,organization` rows for every domain that names its organization.
    pub fn fixture_orgs_csv(&self) -> String {
        let mut rows = BTreeMap::new();
        for d in &self.domains {
            if let Some(org) = &d.organization {
                let sld = match &d.sld {
                    Some(s) => s.clone(),
                    None => match Fqdn::parse(&d.fqdn) {
                        Ok(f) => default_sld(&f),
                        Err(_) => continue,
                    },
                };
                rows.insert(sld, org.clone());
            }
        }
        let mut out = String::from("sld,organization\n");
        for (sld, org) in rows {
            out.push_str(&format!("{sld},\"{}\"\n", org.replace('"', "\"\"")));
        }
        out
    }

    fn validate(&self) -> Result<Vec<Fqdn>, SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.bucket_width_secs == 0 {
            return bad("bucket width must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.dns_share) || !(0.0..=1.0).contains(&self.cname_share) {
            return bad("shares must lie in [0, 1]".into());
        }
        if self.domains.len() > MAX_DOMAINS {
            return bad(format!("at most {MAX_DOMAINS} domains"));
        }
        let mut keys = BTreeSet::new();
        let mut macs = BTreeSet::new();
        for d in &self.devices {
            if d.device_key.is_empty() || !keys.insert(d.device_key.as_str()) {
                return bad(format!("device key {:?} empty or repeated", d.device_key));
            }
            if !macs.insert(d.mac) {
                return bad(format!("MAC {} repeated", d.mac));
            }
            if d.ip.is_unspecified() {
                return bad(format!("device {} has no address", d.device_key));
            }
        }
        let mut names = Vec::with_capacity(self.domains.len());
        let mut seen = BTreeSet::new();
        for d in &self.domains {
            if !(d.contact_rate.is_finite() && d.contact_rate > 0.0) {
                return bad(format!("{}: rate must be positive", d.fqdn));
            }
            let f = Fqdn::parse(&d.fqdn).map_err(|e| SynthError::InvalidSpec(format!("{}: {e}", d.fqdn)))?;
            if !seen.insert(f.clone()) {
                return bad(format!("{} listed twice", d.fqdn));
            }
            match &d.devices {
                Some(list) if list.is_empty() => return bad(format!("{}: empty device list", d.fqdn)),
                Some(list) => {
                    if let Some(k) = list.iter().find(|k| !keys.contains(k.as_str())) {
                        return bad(format!("{}: unknown device {k}", d.fqdn));
                    }
                }
                None if self.devices.is_empty() && self.contact_count(d) > 0 => {
                    return bad(format!("{}: no devices to contact it", d.fqdn));
                }
                None => {}
            }
            names.push(f);
        }
        // a tracker rule covers its subdomains, so those cannot be declared clean
        let trackers: BTreeSet<&str> =
            self.domains.iter().zip(&names).filter(|(d, _)| d.is_tracker).map(|(_, f)| f.as_str()).collect();
        for (d, f) in self.domains.iter().zip(&names) {
            if !d.is_tracker && f.suffixes().any(|s| trackers.contains(s)) {
                return bad(format!("{} lies under a tracker domain", d.fqdn));
            }
        }
        Ok(names)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDomain {
    pub device_key: String,
    pub fqdn: Fqdn,
    pub sld: String,
    pub organization: String,
    pub is_tracker: bool,
    pub access_count: u64,
    pub dns_count: u64,
    pub last_contacted: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEdge {
    pub from: String,
    pub to: String,
    pub weight: u64,
}

/// Everything the pipeline should compute from the generated capture.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub packets: u64,
    pub dns_events: u64,
    pub flow_events: u64,
    pub bucket_width_secs: u32,
    /// Sorted by device key, then name.
    pub domains: Vec<ManifestDomain>,
    pub device_bytes: BTreeMap<String, u64>,
    pub device_contacts: BTreeMap<String, u64>,
    pub buckets: BTreeMap<String, BTreeMap<Timestamp, u64>>,
    pub dns_series: BTreeMap<String, BTreeMap<Timestamp, u64>>,
    pub top_trackers: Vec<(Fqdn, u64)>,
    pub top_non_trackers: Vec<(Fqdn, u64)>,
    pub alluvial_edges: Vec<ManifestEdge>,
    pub first_event: Option<Timestamp>,
    pub last_event: Option<Timestamp>,
}

impl Manifest {
    pub fn domain(&self, device: &str, fqdn: &str) -> Option<&ManifestDomain> {
        self.domains.iter().find(|d| d.device_key == device && d.fqdn.as_str() == fqdn)
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub frames: Vec<Frame>,
    pub manifest: Manifest,
}

impl Generated {
    pub fn pcap_bytes(&self) -> Vec<u8> {
        let mut w = PcapWriter::new(Vec::new()).expect("writing to memory");
        for f in &self.frames {
            w.write(f.timestamp, &f.data).expect("writing to memory");
        }
        w.into_inner()
    }
}

/// Builds the capture and its manifest. The seed fully determines both.
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<u8>, Manifest), SynthError> {
    let g = generate_frames(spec)?;
    Ok((g.pcap_bytes(), g.manifest))
}

fn domain_addr(idx: usize, v6: bool) -> IpAddr {
    if v6 {
        IpAddr::V6(Ipv6Addr::new(0x2001, 0x2, 0, 0, 0, 0, 0, idx as u16 + 1))
    } else {
        // 198.18.0.0/15
        let n = u32::from(Ipv4Addr::new(198, 18, 0, 0)) + idx as u32 + 1;
        IpAddr::V4(Ipv4Addr::from(n))
    }
}

fn default_sld(f: &Fqdn) -> String {
    let labels: Vec<&str> = f.labels().collect();
    labels[labels.len().saturating_sub(2)..].join(".")
}

pub fn generate_frames(spec: &ScenarioSpec) -> Result<Generated, SynthError> {
    let names = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dev_index: HashMap<&str, usize> =
        spec.devices.iter().enumerate().map(|(i, d)| (d.device_key.as_str(), i)).collect();
    let span_us = spec.duration as i64 * 1_000_000;
    let start_us = spec.start * 1_000_000;

    // (timestamp, domain, device)
    let mut contacts: Vec<(i64, usize, usize)> = Vec::new();
    if span_us > 0 {
        for (di, d) in spec.domains.iter().enumerate() {
            let devs: Vec<usize> = match &d.devices {
                Some(list) => list.iter().map(|k| dev_index[k.as_str()]).collect(),
                None => (0..spec.devices.len()).collect(),
            };
            for _ in 0..spec.contact_count(d) {
                let t = start_us + rng.gen_range(0..span_us);
                contacts.push((t, di, devs[rng.gen_range(0..devs.len())]));
            }
        }
    }
    contacts.sort_unstable();

    let width = spec.bucket_width_secs;
    let mut m = Manifest { bucket_width_secs: width, ..Manifest::default() };
    let mut rows: BTreeMap<(usize, Fqdn), ManifestDomain> = BTreeMap::new();
    let mut last_dns: HashMap<(usize, bool), i64> = HashMap::new();
    let mut frames = Vec::with_capacity(contacts.len());
    for (t_us, di, dv) in contacts {
        let ts = Timestamp::from_micros(t_us);
        let dom = &spec.domains[di];
        let dev = &spec.devices[dv];
        let v6 = dev.ip.is_ipv6();
        let fresh = last_dns.get(&(di, v6)).is_none_or(|prev| t_us - prev > DNS_REFRESH_SECS * 1_000_000);
        let seen_by_device = rows.contains_key(&(dv, names[di].clone()));
        let is_dns = fresh || !seen_by_device || rng.gen_bool(spec.dns_share);
        let key = &dev.device_key;
        let frame = if is_dns {
            last_dns.insert((di, v6), t_us);
            *m.dns_series.entry(key.clone()).or_default().entry(ts.align_down(width)).or_default() += 1;
            m.dns_events += 1;
            let cname = rng.gen_bool(spec.cname_share);
            dns_frame(&mut rng, ts, dev, &names[di], di, cname)
        } else {
            let bytes = rng.gen_range(40..=1400usize);
            *m.buckets.entry(key.clone()).or_default().entry(ts.align_down(width)).or_default() += bytes as u64;
            *m.device_bytes.entry(key.clone()).or_default() += bytes as u64;
            m.flow_events += 1;
            flow_frame(&mut rng, ts, dev, domain_addr(di, v6), bytes)
        };
        frames.push(Frame { timestamp: ts, data: frame });
        m.packets += 1;
        *m.device_contacts.entry(key.clone()).or_default() += 1;
        m.first_event.get_or_insert(ts);
        m.last_event = Some(ts);
        let row = rows.entry((dv, names[di].clone())).or_insert_with(|| ManifestDomain {
            device_key: key.clone(),
            fqdn: names[di].clone(),
            sld: dom.sld.clone().unwrap_or_else(|| default_sld(&names[di])),
            organization: dom.organization.clone().unwrap_or_else(|| UNKNOWN_ORG.to_owned()),
            is_tracker: dom.is_tracker,
            access_count: 0,
            dns_count: 0,
            last_contacted: ts,
        });
        row.access_count += 1;
        row.dns_count += u64::from(is_dns);
        row.last_contacted = ts;
    }
    m.domains = rows.into_values().collect();
    m.domains.sort_by(|a, b| (&a.device_key, &a.fqdn).cmp(&(&b.device_key, &b.fqdn)));

    let mut totals: BTreeMap<(&Fqdn, bool), u64> = BTreeMap::new();
    let mut edges: BTreeMap<(String, String), u64> = BTreeMap::new();
    for r in &m.domains {
        *totals.entry((&r.fqdn, r.is_tracker)).or_default() += r.access_count;
        let class = if r.is_tracker { "tracker" } else { "non_tracker" };
        let path = [
            format!("device:{}", r.device_key),
            format!("sld:{}", r.sld),
            format!("org:{}", r.organization),
            format!("class:{class}"),
        ];
        for w in path.windows(2) {
            *edges.entry((w[0].clone(), w[1].clone())).or_default() += r.access_count;
        }
    }
    let top = |tracker: bool| {
        let mut v: Vec<(Fqdn, u64)> =
            totals.iter().filter(|((_, t), _)| *t == tracker).map(|((f, _), c)| ((*f).clone(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(5);
        v
    };
    m.top_trackers = top(true);
    m.top_non_trackers = top(false);
    m.alluvial_edges = edges.into_iter().map(|((from, to), weight)| ManifestEdge { from, to, weight }).collect();
    Ok(Generated { frames, manifest: m })
}

fn dns_frame(rng: &mut ChaCha8Rng, ts: Timestamp, dev: &DeviceSpec, qname: &Fqdn, di: usize, cname: bool) -> Vec<u8> {
    let v6 = dev.ip.is_ipv6();
    let (qtype, addr) = if v6 {
        (RecordType::Aaaa, domain_addr(di, true))
    } else {
        (RecordType::A, domain_addr(di, false))
    };
    let data = match addr {
        IpAddr::V4(a) => AnswerData::A(a),
        IpAddr::V6(a) => AnswerData::Aaaa(a),
    };
    let ttl = rng.gen_range(30..=3600);
    let mut b = MessageBuilder::new(rng.gen(), FLAG_QR | FLAG_RD | FLAG_RA)
        .compression(rng.gen_bool(0.5))
        .question(qname, qtype);
    if cname {
        let target = Fqdn::parse(&format!("e{di}.edge.synth-cdn.net")).expect("valid synthetic name");
        b = b.answer(qname, ttl, &AnswerData::Cname(target.clone())).answer(&target, ttl, &data);
    } else {
        b = b.answer(qname, ttl, &data);
    }
    let payload = b.finish();
    let (src_ip, dst_ip) = if v6 {
        (IpAddr::V6(RESOLVER_V6), dev.ip)
    } else {
        (IpAddr::V4(RESOLVER_V4), dev.ip)
    };
    encode_ethernet(&RawPacketMeta {
        timestamp: ts,
        src_mac: Some(RESOLVER_MAC),
        dst_mac: Some(dev.mac),
        src_ip,
        dst_ip,
        src_port: 53,
        dst_port: rng.gen_range(1024..=65535),
        protocol: Protocol::Udp,
        payload,
    })
}

fn flow_frame(rng: &mut ChaCha8Rng, ts: Timestamp, dev: &DeviceSpec, dst: IpAddr, bytes: usize) -> Vec<u8> {
    let (protocol, dst_port) = FLOW_PORTS[rng.gen_range(0..FLOW_PORTS.len())];
    encode_ethernet(&RawPacketMeta {
        timestamp: ts,
        src_mac: Some(dev.mac),
        dst_mac: Some(RESOLVER_MAC),
        src_ip: dev.ip,
        dst_ip: dst,
        src_port: rng.gen_range(1024..=65535),
        dst_port,
        protocol,
        payload: vec![0u8; bytes],
    })
}
