use std::net::{Ipv4Addr, Ipv6Addr};

use thiserror::Error;

use super::{AnswerData, Header, Question, Record, RecordType, HEADER_LEN};
use crate::name::{Fqdn, NameError};

/// Wire names (length octets included) may not exceed this.
const MAX_WIRE_NAME: usize = 255;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message truncated at offset {0}")]
    Truncated(usize),
    #[error("compression pointer at offset {0} does not point backwards")]
    BadPointer(usize),
    #[error("name exceeds 255 bytes")]
    NameOverflow,
    #[error("reserved label type 0x{0:02x}")]
    BadLabelType(u8),
    #[error("invalid name: {0}")]
    BadName(#[from] NameError),
    #[error("rdata length {len} invalid for record type {rtype}")]
    BadRdata { rtype: u16, len: usize },
}

/// Reads a possibly compressed name starting at `offset`.
///
/// Returns the labels and the offset just past the name as it appears at `offset`.
/// Every pointer must target an offset strictly below the start of the segment it
/// was found in, so decoding always terminates.
pub fn read_name(msg: &[u8], offset: usize) -> Result<(Vec<&[u8]>, usize), WireError> {
    let mut labels = Vec::new();
    let mut pos = offset;
    let mut segment_start = offset;
    let mut resume = None;
    let mut wire_len = 0usize;
    loop {
        let len = *msg.get(pos).ok_or(WireError::Truncated(pos))?;
        match len & 0xc0 {
            0x00 => {
                wire_len += 1 + len as usize;
                if wire_len > MAX_WIRE_NAME {
                    return Err(WireError::NameOverflow);
                }
                if len == 0 {
                    return Ok((labels, resume.unwrap_or(pos + 1)));
                }
                let end = pos + 1 + len as usize;
                let label = msg.get(pos + 1..end).ok_or(WireError::Truncated(msg.len()))?;
                labels.push(label);
                pos = end;
            }
            0xc0 => {
                let lo = *msg.get(pos + 1).ok_or(WireError::Truncated(pos + 1))?;
                let target = (usize::from(len & 0x3f) << 8) | usize::from(lo);
                if target >= segment_start {
                    return Err(WireError::BadPointer(pos));
                }
                resume.get_or_insert(pos + 2);
                segment_start = target;
                pos = target;
            }
            _ => return Err(WireError::BadLabelType(len)),
        }
    }
}

fn read_fqdn(msg: &[u8], offset: usize) -> Result<(Fqdn, usize), WireError> {
    let (labels, next) = read_name(msg, offset)?;
    Ok((Fqdn::from_labels(labels)?, next))
}

fn u16_at(msg: &[u8], at: usize) -> Result<u16, WireError> {
    msg.get(at..at + 2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .ok_or(WireError::Truncated(at))
}

fn u32_at(msg: &[u8], at: usize) -> Result<u32, WireError> {
    msg.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(WireError::Truncated(at))
}

pub fn parse_header(msg: &[u8]) -> Result<Header, WireError> {
    if msg.len() < HEADER_LEN {
        return Err(WireError::Truncated(msg.len()));
    }
    Ok(Header {
        id: u16_at(msg, 0)?,
        flags: u16_at(msg, 2)?,
        qdcount: u16_at(msg, 4)?,
        ancount: u16_at(msg, 6)?,
        nscount: u16_at(msg, 8)?,
        arcount: u16_at(msg, 10)?,
    })
}

/// Header, questions and the supported part of the answer section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub header: Header,
    pub questions: Vec<Question>,
    /// A, AAAA and CNAME answers in wire order; other types are skipped.
    pub answers: Vec<Record>,
    /// Offset just past the question section.
    pub question_end: usize,
}

pub fn parse_message(msg: &[u8]) -> Result<Message, WireError> {
    let header = parse_header(msg)?;
    let mut pos = HEADER_LEN;
    let mut questions = Vec::with_capacity(usize::from(header.qdcount.min(4)));
    for _ in 0..header.qdcount {
        let (name, next) = read_fqdn(msg, pos)?;
        let qtype = RecordType::from_code(u16_at(msg, next)?);
        let qclass = u16_at(msg, next + 2)?;
        questions.push(Question { name, qtype, qclass });
        pos = next + 4;
    }
    let question_end = pos;

    let mut answers = Vec::new();
    for _ in 0..header.ancount {
        let (labels, next) = read_name(msg, pos)?;
        let rtype = u16_at(msg, next)?;
        let ttl = u32_at(msg, next + 4)?;
        let rdlen = usize::from(u16_at(msg, next + 8)?);
        let rdata_start = next + 10;
        let rdata_end = rdata_start + rdlen;
        let rdata = msg.get(rdata_start..rdata_end).ok_or(WireError::Truncated(msg.len()))?;
        pos = rdata_end;

        let data = match RecordType::from_code(rtype) {
            RecordType::A => {
                let octets: [u8; 4] =
                    rdata.try_into().map_err(|_| WireError::BadRdata { rtype, len: rdlen })?;
                AnswerData::A(Ipv4Addr::from(octets))
            }
            RecordType::Aaaa => {
                let octets: [u8; 16] =
                    rdata.try_into().map_err(|_| WireError::BadRdata { rtype, len: rdlen })?;
                AnswerData::Aaaa(Ipv6Addr::from(octets))
            }
            RecordType::Cname => {
                let (target, end) = read_fqdn(msg, rdata_start)?;
                if end != rdata_end {
                    return Err(WireError::BadRdata { rtype, len: rdlen });
                }
                AnswerData::Cname(target)
            }
            _ => continue,
        };
        answers.push(Record { name: Fqdn::from_labels(labels)?, ttl, data });
    }

    Ok(Message { header, questions, answers, question_end })
}

/// What the collector keeps from a DNS response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub id: u16,
    /// The name the client asked for (first question, else the first answer owner).
    pub qname: Fqdn,
    pub answers: Vec<AnswerData>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("not a DNS response with answers")]
    NotResponse,
    #[error("malformed DNS message: {0}")]
    Malformed(#[from] WireError),
}

/// Parses a response carrying at least one A/AAAA/CNAME answer.
pub fn parse_response(msg: &[u8]) -> Result<ParsedResponse, ResponseError> {
    let header = parse_header(msg)?;
    if !header.is_response() || header.ancount == 0 {
        return Err(ResponseError::NotResponse);
    }
    let m = parse_message(msg)?;
    if m.answers.is_empty() {
        return Err(ResponseError::NotResponse);
    }
    let qname = match m.questions.first() {
        Some(q) => q.name.clone(),
        None => m.answers[0].name.clone(),
    };
    Ok(ParsedResponse {
        id: m.header.id,
        qname,
        answers: m.answers.into_iter().map(|r| r.data).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hdr(flags: u16, qd: u16, an: u16) -> Vec<u8> {
        let mut v = vec![0x12, 0x34];
        v.extend_from_slice(&flags.to_be_bytes());
        v.extend_from_slice(&qd.to_be_bytes());
        v.extend_from_slice(&an.to_be_bytes());
        v.extend_from_slice(&[0, 0, 0, 0]);
        v
    }

    #[test]
    fn single_a_record_by_hand() {
        // example.com A 93.184.216.34, answer owner compressed to the question.
        let mut m = hdr(0x8180, 1, 1);
        m.extend_from_slice(b"\x07example\x03com\x00\x00\x01\x00\x01");
        m.extend_from_slice(&[0xc0, 0x0c, 0, 1, 0, 1, 0, 0, 0x0e, 0x10, 0, 4, 93, 184, 216, 34]);
        let r = parse_response(&m).unwrap();
        assert_eq!(r.qname.as_str(), "example.com");
        assert_eq!(r.answers, vec![AnswerData::A(Ipv4Addr::new(93, 184, 216, 34))]);
    }

    #[test]
    fn query_is_not_a_response() {
        let mut m = hdr(0x0100, 1, 0);
        m.extend_from_slice(b"\x07example\x03com\x00\x00\x01\x00\x01");
        assert_eq!(parse_response(&m), Err(ResponseError::NotResponse));
    }

    #[test]
    fn self_pointer_is_rejected() {
        let mut m = hdr(0x8180, 1, 1);
        m.extend_from_slice(&[0xc0, 0x0c]);
        assert_eq!(
            parse_response(&m),
            Err(ResponseError::Malformed(WireError::BadPointer(12)))
        );
    }

    #[test]
    fn two_pointer_cycle_is_rejected() {
        // 12: "a" then pointer to 17; 17: pointer back to 12.
        let mut m = hdr(0x8180, 1, 1);
        m.extend_from_slice(&[1, b'a', 0xc0, 17, 0, 0xc0, 12]);
        assert!(matches!(read_name(&m, 12), Err(WireError::BadPointer(_))));
    }

    #[test]
    fn overlong_name_rejected() {
        let mut m = hdr(0x8180, 1, 1);
        for _ in 0..5 {
            m.push(63);
            m.extend(std::iter::repeat_n(b'a', 63));
        }
        m.push(0);
        assert_eq!(read_name(&m, 12), Err(WireError::NameOverflow));
    }

    #[test]
    fn truncated_header() {
        assert_eq!(
            parse_response(&[0x80, 0x00, 0x01]),
            Err(ResponseError::Malformed(WireError::Truncated(3)))
        );
    }

    #[test]
    fn unsupported_answer_types_are_skipped() {
        let mut m = hdr(0x8180, 1, 2);
        m.extend_from_slice(b"\x01t\x07example\x00\x00\x01\x00\x01");
        // TXT record
        m.extend_from_slice(&[0xc0, 0x0c, 0, 16, 0, 1, 0, 0, 0, 60, 0, 3, 2, b'h', b'i']);
        m.extend_from_slice(&[0xc0, 0x0c, 0, 1, 0, 1, 0, 0, 0, 60, 0, 4, 10, 0, 0, 1]);
        let r = parse_response(&m).unwrap();
        assert_eq!(r.answers, vec![AnswerData::A(Ipv4Addr::new(10, 0, 0, 1))]);
    }

    #[test]
    fn a_record_with_bad_length() {
        let mut m = hdr(0x8180, 1, 1);
        m.extend_from_slice(b"\x01t\x07example\x00\x00\x01\x00\x01");
        m.extend_from_slice(&[0xc0, 0x0c, 0, 1, 0, 1, 0, 0, 0, 60, 0, 3, 10, 0, 0]);
        assert!(matches!(
            parse_response(&m),
            Err(ResponseError::Malformed(WireError::BadRdata { rtype: 1, len: 3 }))
        ));
    }
}
