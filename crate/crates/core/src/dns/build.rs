use std::collections::HashMap;

use super::{AnswerData, RecordType, CLASS_IN, HEADER_LEN};
use crate::name::Fqdn;

/// Incremental DNS message writer with optional name compression.
///
/// Sections must be written in order: questions, then answers.
#[derive(Debug, Clone)]
pub struct MessageBuilder {
    buf: Vec<u8>,
    compress: bool,
    offsets: HashMap<String, u16>,
    qdcount: u16,
    ancount: u16,
}

impl MessageBuilder {
    pub fn new(id: u16, flags: u16) -> Self {
        let mut buf = Vec::with_capacity(128);
        buf.extend_from_slice(&id.to_be_bytes());
        buf.extend_from_slice(&flags.to_be_bytes());
        buf.extend_from_slice(&[0; 8]);
        MessageBuilder { buf, compress: true, offsets: HashMap::new(), qdcount: 0, ancount: 0 }
    }

    pub fn compression(mut self, on: bool) -> Self {
        self.compress = on;
        self
    }

    fn write_name(&mut self, name: &Fqdn) {
        let s = name.as_str();
        let mut rest = s;
        loop {
            if self.compress {
                if let Some(&off) = self.offsets.get(rest) {
                    self.buf.extend_from_slice(&(0xc000 | off).to_be_bytes());
                    return;
                }
                if self.buf.len() < 0x3fff {
                    self.offsets.insert(rest.to_owned(), self.buf.len() as u16);
                }
            }
            let (label, tail) = match rest.split_once('.') {
                Some((l, t)) => (l, Some(t)),
                None => (rest, None),
            };
            self.buf.push(label.len() as u8);
            self.buf.extend_from_slice(label.as_bytes());
            match tail {
                Some(t) => rest = t,
                None => {
                    self.buf.push(0);
                    return;
                }
            }
        }
    }

    pub fn question(mut self, name: &Fqdn, qtype: RecordType) -> Self {
        debug_assert_eq!(self.ancount, 0);
        self.write_name(name);
        self.buf.extend_from_slice(&qtype.code().to_be_bytes());
        self.buf.extend_from_slice(&CLASS_IN.to_be_bytes());
        self.qdcount += 1;
        self
    }

    /// Copies already-encoded question entries verbatim.
    pub fn raw_questions(mut self, encoded: &[u8], count: u16) -> Self {
        self.buf.extend_from_slice(encoded);
        self.qdcount += count;
        self
    }

    pub fn answer(mut self, name: &Fqdn, ttl: u32, data: &AnswerData) -> Self {
        self.write_name(name);
        self.record_tail(data.record_type(), ttl);
        match data {
            AnswerData::A(ip) => self.rdata(&ip.octets()),
            AnswerData::Aaaa(ip) => self.rdata(&ip.octets()),
            AnswerData::Cname(target) => {
                let len_at = self.buf.len();
                self.buf.extend_from_slice(&[0, 0]);
                self.write_name(target);
                let len = (self.buf.len() - len_at - 2) as u16;
                self.buf[len_at..len_at + 2].copy_from_slice(&len.to_be_bytes());
            }
        }
        self.ancount += 1;
        self
    }

    /// An answer whose owner is a compression pointer to `owner_offset`.
    pub fn answer_at(mut self, owner_offset: u16, rtype: RecordType, ttl: u32, rdata: &[u8]) -> Self {
        self.buf.extend_from_slice(&(0xc000 | owner_offset).to_be_bytes());
        self.record_tail(rtype, ttl);
        self.rdata(rdata);
        self.ancount += 1;
        self
    }

    fn record_tail(&mut self, rtype: RecordType, ttl: u32) {
        self.buf.extend_from_slice(&rtype.code().to_be_bytes());
        self.buf.extend_from_slice(&CLASS_IN.to_be_bytes());
        self.buf.extend_from_slice(&ttl.to_be_bytes());
    }

    fn rdata(&mut self, data: &[u8]) {
        self.buf.extend_from_slice(&(data.len() as u16).to_be_bytes());
        self.buf.extend_from_slice(data);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.len() == HEADER_LEN
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.buf[4..6].copy_from_slice(&self.qdcount.to_be_bytes());
        self.buf[6..8].copy_from_slice(&self.ancount.to_be_bytes());
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dns::{parse_response, FLAG_QR};
    use std::net::Ipv4Addr;

    #[test]
    fn cname_chain_compresses_and_parses() {
        let a = Fqdn::parse("a.cdn.example").unwrap();
        let b = Fqdn::parse("b.edge.example").unwrap();
        let msg = MessageBuilder::new(7, FLAG_QR)
            .question(&a, RecordType::A)
            .answer(&a, 60, &AnswerData::Cname(b.clone()))
            .answer(&b, 60, &AnswerData::A(Ipv4Addr::new(10, 0, 0, 7)))
            .finish();
        // second occurrence of "a.cdn.example" is a pointer to the question name
        assert_eq!(&msg[31..33], &[0xc0, 0x0c]);
        let r = parse_response(&msg).unwrap();
        assert_eq!(r.qname, a);
        assert_eq!(r.answers.len(), 2);
        assert_eq!(r.answers[0], AnswerData::Cname(b));
    }
}
