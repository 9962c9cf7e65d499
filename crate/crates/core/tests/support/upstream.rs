//! A stub recursive resolver and a minimal client for sinkhole tests.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use tokio::net::UdpSocket;

use super::wire::{Encoder, Rdata, Rr};

pub const UPSTREAM_V4: Ipv4Addr = Ipv4Addr::new(93, 184, 216, 34);
pub const UPSTREAM_V6: Ipv6Addr = Ipv6Addr::new(0x2001, 0xdb8, 0, 0, 0, 0, 0, 0x34);

pub fn query(id: u16, name: &str, qtype: u16) -> Vec<u8> {
    let mut q = Vec::new();
    q.extend_from_slice(&id.to_be_bytes());
    q.extend_from_slice(&[0x01, 0x00, 0, 1, 0, 0, 0, 0, 0, 0]);
    for l in name.split('.') {
        q.push(l.len() as u8);
        q.extend_from_slice(l.as_bytes());
    }
    q.extend_from_slice(&[0]);
    q.extend_from_slice(&qtype.to_be_bytes());
    q.extend_from_slice(&[0, 1]);
    q
}

fn skip_name(m: &[u8], mut i: usize) -> usize {
    loop {
        let len = m[i];
        if len & 0xc0 == 0xc0 {
            return i + 2;
        }
        i += 1;
        if len == 0 {
            return i;
        }
        i += usize::from(len);
    }
}

/// Qname of a single-question message, in presentation form.
pub fn question_name(m: &[u8]) -> String {
    let mut labels = Vec::new();
    let mut i = 12;
    while m[i] != 0 {
        let len = usize::from(m[i]);
        labels.push(String::from_utf8_lossy(&m[i + 1..i + 1 + len]).to_ascii_lowercase());
        i += 1 + len;
    }
    labels.join(".")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub id: u16,
    pub rcode: u8,
    pub addresses: Vec<IpAddr>,
    pub ttls: Vec<u32>,
}

pub fn decode_reply(m: &[u8]) -> Reply {
    let id = u16::from_be_bytes([m[0], m[1]]);
    let ancount = u16::from_be_bytes([m[6], m[7]]);
    let mut i = skip_name(m, 12) + 4;
    let (mut addresses, mut ttls) = (Vec::new(), Vec::new());
    for _ in 0..ancount {
        i = skip_name(m, i);
        let rtype = u16::from_be_bytes([m[i], m[i + 1]]);
        ttls.push(u32::from_be_bytes([m[i + 4], m[i + 5], m[i + 6], m[i + 7]]));
        let rdlen = usize::from(u16::from_be_bytes([m[i + 8], m[i + 9]]));
        let rd = &m[i + 10..i + 10 + rdlen];
        match (rtype, rdlen) {
            (1, 4) => addresses.push(IpAddr::V4(Ipv4Addr::new(rd[0], rd[1], rd[2], rd[3]))),
            (28, 16) => addresses.push(IpAddr::V6(Ipv6Addr::from(<[u8; 16]>::try_from(rd).unwrap()))),
            _ => {}
        }
        i += 10 + rdlen;
    }
    Reply { id, rcode: m[3] & 0x0f, addresses, ttls }
}

/// Answers every A/AAAA query with a fixed address. `hits` counts queries seen.
pub struct StubUpstream {
    pub addr: SocketAddr,
    pub hits: Arc<AtomicU64>,
}

impl StubUpstream {
    pub async fn spawn() -> Self {
        let sock = UdpSocket::bind("127.0.0.1:0").await.unwrap();
        let addr = sock.local_addr().unwrap();
        let hits = Arc::new(AtomicU64::new(0));
        let h = hits.clone();
        tokio::spawn(async move {
            let mut buf = [0u8; 1500];
            while let Ok((n, peer)) = sock.recv_from(&mut buf).await {
                h.fetch_add(1, Ordering::SeqCst);
                let q = &buf[..n];
                let id = u16::from_be_bytes([q[0], q[1]]);
                let name = question_name(q);
                let qtype_at = skip_name(q, 12);
                let qtype = u16::from_be_bytes([q[qtype_at], q[qtype_at + 1]]);
                let data = if qtype == 28 { Rdata::Aaaa(UPSTREAM_V6) } else { Rdata::A(UPSTREAM_V4) };
                let reply = Encoder::new(true).response(id, &name, qtype, &[Rr { owner: name.clone(), ttl: 300, data }]);
                let _ = sock.send_to(&reply, peer).await;
            }
        });
        StubUpstream { addr, hits }
    }
}
