use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::net::UdpSocket;

use super::blocklist::BlockListStore;
use crate::dns::{
    read_name, MessageBuilder, Opcode, Rcode, RecordType, FLAG_QR, FLAG_RA, FLAG_RD, FLAG_TC, HEADER_LEN,
    MAX_UDP_PAYLOAD,
};
use crate::name::Fqdn;

pub const DEFAULT_UPSTREAM_TIMEOUT: Duration = Duration::from_secs(2);
pub const BLOCKED_TTL: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockingMode {
    /// NOERROR with 0.0.0.0 / :: answers.
    #[default]
    Null,
    NxDomain,
}

#[derive(Debug, Clone)]
pub struct SinkholeConfig {
    pub upstream: SocketAddr,
    pub timeout: Duration,
    pub blocking: BlockingMode,
    pub blocked_ttl: u32,
}

impl SinkholeConfig {
    pub fn new(upstream: SocketAddr) -> Self {
        SinkholeConfig { upstream, timeout: DEFAULT_UPSTREAM_TIMEOUT, blocking: BlockingMode::Null, blocked_ttl: BLOCKED_TTL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkholeAction {
    Blocked,
    Forwarded,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SinkholeDecision {
    pub action: SinkholeAction,
    pub qname: Option<Fqdn>,
    pub qtype: Option<u16>,
    /// Time spent producing the response, in microseconds.
    pub latency_us: u64,
    pub upstream_used: Option<SocketAddr>,
    /// Response code sent back to the client.
    pub rcode: u8,
}

/// Outcome of the I/O-free part of query handling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// A complete response built locally.
    Respond { response: Vec<u8>, action: SinkholeAction, qname: Option<Fqdn>, qtype: Option<u16>, rcode: Rcode },
    /// Relay the query unchanged to the upstream resolver.
    Forward { qname: Option<Fqdn>, qtype: u16, id: u16, question_end: usize },
}

fn error_response(query: &[u8], rcode: Rcode, question: Option<(&[u8], u16)>) -> Vec<u8> {
    let id = match query {
        [a, b, ..] => u16::from_be_bytes([*a, *b]),
        _ => 0,
    };
    let rd = query.get(2).map_or(0, |b| u16::from(*b & 0x01) << 8);
    let opcode = query.get(2).map_or(0, |b| u16::from(*b & 0x78) << 8);
    let b = MessageBuilder::new(id, FLAG_QR | FLAG_RA | rd | opcode | u16::from(rcode.code()));
    match question {
        Some((q, count)) => b.raw_questions(q, count).finish(),
        None => b.finish(),
    }
}

/// UDP DNS forwarder that null-answers names on the blocklist.
#[derive(Debug)]
pub struct Sinkhole {
    blocklist: Arc<BlockListStore>,
    config: SinkholeConfig,
}

impl Sinkhole {
    pub fn new(blocklist: Arc<BlockListStore>, config: SinkholeConfig) -> Self {
        Sinkhole { blocklist, config }
    }

    pub fn blocklist(&self) -> &Arc<BlockListStore> {
        &self.blocklist
    }

    pub fn config(&self) -> &SinkholeConfig {
        &self.config
    }

    /// Decides how to answer `query` without any network I/O.
    pub fn decide(&self, query: &[u8]) -> Verdict {
        let formerr = |q: &[u8]| Verdict::Respond {
            response: error_response(q, Rcode::FormErr, None),
            action: SinkholeAction::Refused,
            qname: None,
            qtype: None,
            rcode: Rcode::FormErr,
        };
        let Ok(header) = crate::dns::parse_header(query) else {
            return formerr(query);
        };
        if header.is_response() || header.qdcount != 1 {
            return formerr(query);
        }
        let Ok((labels, name_end)) = read_name(query, HEADER_LEN) else {
            return formerr(query);
        };
        let question_end = name_end + 4;
        if query.len() < question_end {
            return formerr(query);
        }
        let qtype = u16::from_be_bytes([query[name_end], query[name_end + 1]]);
        let question = &query[HEADER_LEN..question_end];
        let qname = Fqdn::from_labels(labels).ok();

        if header.opcode() != Opcode::Query {
            return Verdict::Respond {
                response: error_response(query, Rcode::NotImp, Some((question, 1))),
                action: SinkholeAction::Refused,
                qname,
                qtype: Some(qtype),
                rcode: Rcode::NotImp,
            };
        }

        let blocked = qname.as_ref().is_some_and(|n| self.blocklist.snapshot().is_blocked(n));
        if !blocked {
            return Verdict::Forward { qname, qtype, id: header.id, question_end };
        }

        let flags = FLAG_QR | FLAG_RA | (header.flags & FLAG_RD);
        let (rcode, answer) = match (self.config.blocking, RecordType::from_code(qtype)) {
            (BlockingMode::NxDomain, _) => (Rcode::NxDomain, None),
            (BlockingMode::Null, RecordType::A) => (Rcode::NoError, Some(Ipv4Addr::UNSPECIFIED.octets().to_vec())),
            (BlockingMode::Null, RecordType::Aaaa) => {
                (Rcode::NoError, Some(Ipv6Addr::UNSPECIFIED.octets().to_vec()))
            }
            // NODATA
            (BlockingMode::Null, _) => (Rcode::NoError, None),
        };
        let mut b = MessageBuilder::new(header.id, flags | u16::from(rcode.code())).raw_questions(question, 1);
        if let Some(rdata) = answer {
            b = b.answer_at(HEADER_LEN as u16, RecordType::from_code(qtype), self.config.blocked_ttl, &rdata);
        }
        let mut response = b.finish();
        if response.len() > MAX_UDP_PAYLOAD {
            response = MessageBuilder::new(header.id, flags | FLAG_TC | u16::from(rcode.code())).finish();
        }
        Verdict::Respond { response, action: SinkholeAction::Blocked, qname, qtype: Some(qtype), rcode }
    }

    /// Answers one query: locally when blocked or invalid, otherwise via the upstream.
    /// Always produces exactly one well-formed response.
    pub async fn handle_query(&self, query: &[u8]) -> (Vec<u8>, SinkholeDecision) {
        let started = Instant::now();
        match self.decide(query) {
            Verdict::Respond { response, action, qname, qtype, rcode } => {
                let latency_us = started.elapsed().as_micros() as u64;
                (response, SinkholeDecision { action, qname, qtype, latency_us, upstream_used: None, rcode: rcode.code() })
            }
            Verdict::Forward { qname, qtype, id, question_end } => {
                let upstream = self.config.upstream;
                match forward(query, upstream, id, self.config.timeout).await {
                    Ok(mut reply) => {
                        reply[0..2].copy_from_slice(&id.to_be_bytes());
                        let rcode = reply[3] & 0x0f;
                        let decision = SinkholeDecision {
                            action: SinkholeAction::Forwarded,
                            qname,
                            qtype: Some(qtype),
                            latency_us: started.elapsed().as_micros() as u64,
                            upstream_used: Some(upstream),
                            rcode,
                        };
                        (reply, decision)
                    }
                    Err(e) => {
                        tracing::debug!(%upstream, error = %e, "upstream failed");
                        let q = &query[HEADER_LEN..question_end];
                        let response = error_response(query, Rcode::ServFail, Some((q, 1)));
                        let decision = SinkholeDecision {
                            action: SinkholeAction::Refused,
                            qname,
                            qtype: Some(qtype),
                            latency_us: started.elapsed().as_micros() as u64,
                            upstream_used: Some(upstream),
                            rcode: Rcode::ServFail.code(),
                        };
                        (response, decision)
                    }
                }
            }
        }
    }
}

async fn forward(query: &[u8], upstream: SocketAddr, id: u16, timeout: Duration) -> std::io::Result<Vec<u8>> {
    let bind: SocketAddr = match upstream.ip() {
        IpAddr::V4(_) => (Ipv4Addr::UNSPECIFIED, 0).into(),
        IpAddr::V6(_) => (Ipv6Addr::UNSPECIFIED, 0).into(),
    };
    let sock = UdpSocket::bind(bind).await?;
    sock.connect(upstream).await?;
    sock.send(query).await?;
    let deadline = tokio::time::Instant::now() + timeout;
    let mut buf = vec![0u8; 65535];
    loop {
        let n = tokio::time::timeout_at(deadline, sock.recv(&mut buf))
            .await
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::TimedOut, "upstream timeout"))??;
        // ignore stray datagrams that are not a reply to this query
        if n >= HEADER_LEN && u16::from_be_bytes([buf[0], buf[1]]) == id && buf[2] & 0x80 != 0 {
            buf.truncate(n);
            return Ok(buf);
        }
    }
}
