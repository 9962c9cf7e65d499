//! Stand-alone DNS response encoder used as a test oracle. Written directly from
//! RFC 1035 section 4 and shares no code with the crate under test.

use std::collections::HashMap;
use std::net::{Ipv4Addr, Ipv6Addr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rdata {
    A(Ipv4Addr),
    Aaaa(Ipv6Addr),
    Cname(String),
    /// Any other type, carried as opaque bytes.
    Other(u16, Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct Rr {
    pub owner: String,
    pub ttl: u32,
    pub data: Rdata,
}

pub struct Encoder {
    buf: Vec<u8>,
    compress: bool,
    seen: HashMap<String, u16>,
}

impl Encoder {
    pub fn new(compress: bool) -> Self {
        Encoder { buf: Vec::new(), compress, seen: HashMap::new() }
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn name(&mut self, name: &str) {
        let labels: Vec<&str> = if name.is_empty() { vec![] } else { name.split('.').collect() };
        for i in 0..labels.len() {
            let suffix = labels[i..].join(".");
            if self.compress {
                if let Some(&off) = self.seen.get(&suffix) {
                    self.u16(0xc000 | off);
                    return;
                }
                if self.buf.len() < 0x3fff {
                    self.seen.insert(suffix, self.buf.len() as u16);
                }
            }
            self.buf.push(labels[i].len() as u8);
            self.buf.extend_from_slice(labels[i].as_bytes());
        }
        self.buf.push(0);
    }

    /// A complete response: header, one question, then the answers.
    pub fn response(mut self, id: u16, qname: &str, qtype: u16, answers: &[Rr]) -> Vec<u8> {
        self.u16(id);
        self.u16(0x8180); // QR, RD, RA
        self.u16(1);
        self.u16(answers.len() as u16);
        self.u16(0);
        self.u16(0);
        self.name(qname);
        self.u16(qtype);
        self.u16(1);
        for rr in answers {
            self.name(&rr.owner);
            let rtype = match &rr.data {
                Rdata::A(_) => 1,
                Rdata::Aaaa(_) => 28,
                Rdata::Cname(_) => 5,
                Rdata::Other(t, _) => *t,
            };
            self.u16(rtype);
            self.u16(1);
            self.buf.extend_from_slice(&rr.ttl.to_be_bytes());
            let len_at = self.buf.len();
            self.u16(0);
            match &rr.data {
                Rdata::A(a) => self.buf.extend_from_slice(&a.octets()),
                Rdata::Aaaa(a) => self.buf.extend_from_slice(&a.octets()),
                Rdata::Cname(c) => self.name(c),
                Rdata::Other(_, b) => self.buf.extend_from_slice(b),
            }
            let len = (self.buf.len() - len_at - 2) as u16;
            self.buf[len_at..len_at + 2].copy_from_slice(&len.to_be_bytes());
        }
        self.buf
    }
}
